from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from modals.field import Grid, GridField


class KernelValue(BaseModel):
    """A single sample of Φ."""
    model_config = ConfigDict(frozen=True)

    radius: float = Field(gt=0, description="Distance from the source (wavelength 2π).")
    value: complex

    @model_validator(mode="after")
    def _check_value(self) -> "KernelValue":
        if not np.isfinite(self.value):
            raise ValueError("kernel value must be finite")
        if abs(self.value.imag) > 0.25 + 1e-12:
            raise ValueError("Im Φ = J0/4 must lie in [-1/4, 1/4]")
        return self


class CutoffProfile(str, Enum):
    SMOOTHSTEP = "smoothstep"   # polynomial, C^order
    EXPONENTIAL = "exponential"  # C∞


class CutoffSpec(BaseModel):
    """
    Radial bump in frequency: 1 on ||ξ|-1| <= inner_flat, 0 on ||ξ|-1| >= outer_zero.
    The same model describes the dyadic η (then `around_unit_circle` is False and the
    distances are measured from the origin).
    """
    model_config = ConfigDict(frozen=True)

    inner_flat: float = Field(gt=0)
    outer_zero: float = Field(gt=0)
    profile: CutoffProfile = CutoffProfile.SMOOTHSTEP
    order: int = Field(2, ge=1, le=4, description="Smoothstep continuity order (C^order).")
    around_unit_circle: bool = True

    @model_validator(mode="after")
    def _check_order(self) -> "CutoffSpec":
        if not self.inner_flat < self.outer_zero:
            raise ValueError("inner_flat must be smaller than outer_zero")
        return self

    def distance(self, modulus: np.ndarray) -> np.ndarray:
        modulus = np.asarray(modulus, dtype=float)
        return np.abs(modulus - 1.0) if self.around_unit_circle else modulus


# The two collars and the dyadic profile used by the decomposition.
# ψ is C¹; the first zero of its ramp transform sets the Φ₂ envelope on [10, 100].
PSI_CUTOFF = CutoffSpec(inner_flat=1.0 / 6.0, outer_zero=0.25, order=1)
PHI_COLLAR = CutoffSpec(inner_flat=0.5, outer_zero=0.75)
ETA_CUTOFF = CutoffSpec(inner_flat=1.0, outer_zero=2.0, around_unit_circle=False)


class DyadicPiece(BaseModel):
    """Qʲ = (Φ₁φ_j) ∗ φ together with the annulus where φ_j lives."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(ge=0)
    field: GridField
    annulus: Tuple[float, float]

    @field_validator("annulus")
    @classmethod
    def _ordered(cls, annulus: Tuple[float, float]) -> Tuple[float, float]:
        if not 0.0 <= annulus[0] < annulus[1]:
            raise ValueError("annulus must satisfy 0 <= r_in < r_out")
        return annulus


class KernelDecomposition(BaseModel):
    """Φ = Φ₁ + Φ₂ sampled on one grid centred at the origin."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: GridField
    phi1: GridField
    phi2: GridField
    psi_spec: CutoffSpec = PSI_CUTOFF
    phi_spec: CutoffSpec = PHI_COLLAR
    eta_spec: CutoffSpec = ETA_CUTOFF
    origin_rule: str = "lattice"

    @model_validator(mode="after")
    def _check_split(self) -> "KernelDecomposition":
        if not (self.phi.grid.same_as(self.phi1.grid) and self.phi.grid.same_as(self.phi2.grid)):
            raise ValueError("Φ, Φ₁ and Φ₂ must share one grid")
        gap = np.max(np.abs(self.phi.samples - self.phi1.samples - self.phi2.samples))
        if gap > 1e-10 * max(1.0, float(np.max(np.abs(self.phi.samples)))):
            raise ValueError(f"Φ₁ + Φ₂ differs from Φ by {gap:.3e}")
        return self

    @property
    def grid(self) -> Grid:
        return self.phi.grid


class DecompositionBounds(BaseModel):
    """Fitted constants of |Φ₁| <= C1 (1+r)^{-1/2} and |Φ₂| <= C2 min{1+|log r|, r^{-3}}."""
    c1: float
    c2: float
    phi1_exponent: Optional[float] = None
    phi2_exponent: Optional[float] = None
    fit_ranges: Dict[str, Tuple[float, float]] = Field(default_factory=dict)
