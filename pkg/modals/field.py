from typing import Callable, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# --- Grid geometry ---

MIN_POINTS_PER_SIDE = 16
POINTS_PER_WAVELENGTH = 16


class Grid(BaseModel):
    """Uniform square grid; sample j sits at center + (j - n/2)·h on each axis."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(description="Points per side, a power of two.")
    h: float = Field(gt=0, description="Grid spacing (wavelength is 2π).")
    center: Tuple[float, float] = Field((0.0, 0.0), description="Coordinates of the center sample.")

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, n: int) -> int:
        if n < MIN_POINTS_PER_SIDE or n & (n - 1):
            raise ValueError(f"n must be a power of two >= {MIN_POINTS_PER_SIDE}, got {n}")
        return n

    @property
    def side(self) -> float:
        return self.n * self.h

    @property
    def dual_spacing(self) -> float:
        return 2.0 * np.pi / self.side

    @property
    def resolves_wavelength(self) -> bool:
        return self.h <= 2.0 * np.pi / POINTS_PER_WAVELENGTH * (1.0 + 1e-12)

    def axis(self, k: int) -> np.ndarray:
        """Coordinates along axis k (0 -> x1, 1 -> x2)."""
        return self.center[k] + (np.arange(self.n) - self.n // 2) * self.h

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x1, x2) arrays of shape (n, n); rows are x2, columns x1."""
        x1, x2 = np.meshgrid(self.axis(0), self.axis(1), indexing="xy")
        return x1, x2

    def radius(self) -> np.ndarray:
        x1, x2 = self.mesh()
        return np.hypot(x1 - self.center[0], x2 - self.center[1])

    def frequencies(self) -> Tuple[np.ndarray, np.ndarray]:
        """(ξ1, ξ2) on the dual grid in FFT order."""
        k = np.fft.fftfreq(self.n, d=self.h) * 2.0 * np.pi
        xi1, xi2 = np.meshgrid(k, k, indexing="xy")
        return xi1, xi2

    def frequency_modulus(self) -> np.ndarray:
        xi1, xi2 = self.frequencies()
        return np.hypot(xi1, xi2)

    def padded(self, factor: int = 2) -> "Grid":
        return Grid(n=self.n * factor, h=self.h, center=self.center)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.n == other.n
            and np.isclose(self.h, other.h, rtol=1e-14, atol=0.0)
            and np.allclose(self.center, other.center, rtol=0.0, atol=1e-12 * self.h)
        )


# --- Sampled functions ---

class GridField(BaseModel):
    """Complex samples of a function on a Grid (row-major, x1 fastest)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid
    samples: np.ndarray
    metadata: dict = Field(default_factory=dict, description="Warning flags and provenance.")

    @model_validator(mode="after")
    def _check_samples(self) -> "GridField":
        s = self.samples
        if s.shape != (self.grid.n, self.grid.n):
            raise ValueError(f"samples must have shape {(self.grid.n, self.grid.n)}, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        return self

    @classmethod
    def from_array(cls, grid: Grid, samples: np.ndarray, **metadata) -> "GridField":
        arr = np.array(samples, dtype=np.complex128, copy=True)
        arr.setflags(write=False)
        return cls(grid=grid, samples=arr, metadata=dict(metadata))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridField":
        return cls.from_array(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "GridField":
        x1, x2 = grid.mesh()
        return cls.from_array(grid, fn(x1, x2))

    @property
    def real(self) -> np.ndarray:
        return self.samples.real

    def is_real(self, tol: float = 0.0) -> bool:
        scale = max(float(np.max(np.abs(self.samples))), 1.0)
        return bool(np.max(np.abs(self.samples.imag)) <= tol * scale)

    def with_samples(self, samples: np.ndarray, **metadata) -> "GridField":
        return GridField.from_array(self.grid, samples, **{**self.metadata, **metadata})

    def __add__(self, other: "GridField") -> "GridField":
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "GridField") -> "GridField":
        return self.with_samples(self.samples - other.samples)

    def scaled(self, alpha: complex) -> "GridField":
        return self.with_samples(alpha * self.samples)


class Spectrum(BaseModel):
    """Continuous-convention Fourier coefficients on the dual grid, FFT order."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid
    coefficients: np.ndarray

    @model_validator(mode="after")
    def _check_shape(self) -> "Spectrum":
        if self.coefficients.shape != (self.grid.n, self.grid.n):
            raise ValueError("coefficients must match the grid")
        return self
