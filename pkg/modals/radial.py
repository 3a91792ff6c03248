from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class RadialProfile(BaseModel):
    """u(r), u'(r) of a radial solution on [0, R_max]."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    amplitude: float = Field(description="u(0)")
    blew_up: bool = False

    @model_validator(mode="after")
    def _check_profile(self) -> "RadialProfile":
        if not (self.r.shape == self.u.shape == self.du.shape) or self.r.ndim != 1:
            raise ValueError("r, u and u' must be 1-D arrays of equal length")
        if self.r[0] != 0.0 or np.any(np.diff(self.r) <= 0):
            raise ValueError("radii must start at 0 and increase")
        if self.du[0] != 0.0:
            raise ValueError("regularity at the origin requires u'(0) = 0")
        if not self.blew_up and not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.du))):
            raise ValueError("profile values must be finite")
        return self

    @property
    def r_max(self) -> float:
        return float(self.r[-1])


class AsymptoticMatch(BaseModel):
    """u(r) ≈ A cos(r + ϑ)/√r on a window; `lock` vanishes when ϑ ≡ π/4 (mod π)."""
    amplitude: float
    phase: float
    residual: float
    lock: float
    window: Tuple[float, float]


class ShootingResult(BaseModel):
    amplitude_at_origin: float = Field(description="a = u(0)")
    far_amplitude: float
    far_phase: float
    fit_residual: float
    phase_defect: float = Field(ge=0, description="distance of ϑ to π/4 modulo π")
    amplitude_defect: float = Field(ge=0, description="relative |A - √(π/2) f(1)|")
    farfield_coefficient: float
    p: float
    r_max: float
    iterations: int = 0
    scan: List[Tuple[float, float, float]] = Field(default_factory=list,
                                                  description="(a, ϑ, lock) samples of the bracket scan")
    message: Optional[str] = None

    @model_validator(mode="after")
    def _finite(self) -> "ShootingResult":
        if not np.isfinite(self.fit_residual):
            raise ValueError("fit residual must be finite")
        return self
