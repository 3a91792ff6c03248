from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class FarFieldTrace(BaseModel):
    """Fourier transform sampled on the unit circle at N uniform angles."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    angles: np.ndarray
    values: np.ndarray

    @model_validator(mode="after")
    def _check_angles(self) -> "FarFieldTrace":
        n = self.angles.shape[0]
        if self.angles.ndim != 1 or self.values.shape != (n,) or n < 2:
            raise ValueError("angles and values must be 1-D of equal length >= 2")
        expected = 2.0 * np.pi * np.arange(n) / n
        if not np.allclose(self.angles, expected, rtol=0, atol=1e-12):
            raise ValueError("angles must be uniform on [0, 2π) starting at 0")
        return self

    @classmethod
    def uniform(cls, values: np.ndarray) -> "FarFieldTrace":
        values = np.asarray(values, dtype=np.complex128)
        return cls(angles=2.0 * np.pi * np.arange(values.shape[0]) / values.shape[0], values=values)

    def conjugate_symmetry_defect(self) -> float:
        """max |values(θ+π) - conj(values(θ))|; needs an even N."""
        n = self.values.shape[0]
        if n % 2:
            raise ValueError("conjugate symmetry needs an even number of angles")
        return float(np.max(np.abs(np.roll(self.values, -n // 2) - np.conj(self.values))))

    def scaled(self, alpha: complex) -> "FarFieldTrace":
        return FarFieldTrace(angles=self.angles, values=alpha * self.values)


class DecayFit(BaseModel):
    """Fit of the annulus-max envelope max|u| ≈ A r^s."""
    exponent: float
    amplitude: float
    fit_range: Tuple[float, float]
    residual: float = Field(description="RMS of the log-log regression residuals.")

    @model_validator(mode="after")
    def _check_range(self) -> "DecayFit":
        if not self.fit_range[0] < self.fit_range[1]:
            raise ValueError("fit range must satisfy r1 < r2")
        if not np.isfinite(self.residual):
            raise ValueError("fit residual must be finite")
        return self


class WaveFit(BaseModel):
    """u·√r ≈ A cos(r + ϑ) on an annulus or sector."""
    amplitude: float
    phase: float
    residual: float


class AnnulusError(BaseModel):
    """|x|^{1/2}|u - prediction| over one annulus."""
    r_in: float
    r_out: float
    sup_error: float
    l2_error: float = Field(description="root mean square over the annulus samples")


class CesaroRow(BaseModel):
    radius: float
    error: float = Field(description="(1/R)∫_{1<=|x|<=R} |u - prediction|²")


class SectorComparison(BaseModel):
    angle: float
    fitted: WaveFit
    predicted_amplitude: float
    predicted_phase: float


class FarFieldComparison(BaseModel):
    """Far field from the circle trace against amplitude/phase fitted on u directly."""
    amplitude_defect: float = Field(description="max relative amplitude difference over sectors")
    phase_defect: float = Field(description="max wrapped phase difference over sectors, radians")
    sectors: List[SectorComparison]
