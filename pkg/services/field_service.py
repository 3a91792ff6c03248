from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.fft as sp_fft
import structlog

from modals.field import Grid, GridField, Spectrum
from modals.kernel import CutoffProfile, CutoffSpec
from runtime.environment import runtime_env
from services.errors import DomainError, GridMismatchError

logger = structlog.get_logger(__name__)

Multiplier = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

# Smoothstep polynomials S(t) with S(0)=0, S(1)=1 and the first `order` derivatives
# vanishing at both ends.
_SMOOTHSTEP = {
    1: lambda t: t * t * (3.0 - 2.0 * t),
    2: lambda t: t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t),
    3: lambda t: t ** 4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t ** 3),
    4: lambda t: t ** 5 * (126.0 - 420.0 * t + 540.0 * t * t - 315.0 * t ** 3 + 70.0 * t ** 4),
}


def smoothstep(t: np.ndarray, order: int = 2) -> np.ndarray:
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return _SMOOTHSTEP[order](t)


def exp_step(t: np.ndarray) -> np.ndarray:
    """C∞ step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def smooth_window(r: np.ndarray, r_flat: float, r_zero: float,
                  profile: CutoffProfile = CutoffProfile.EXPONENTIAL, order: int = 2) -> np.ndarray:
    """1 for r <= r_flat, 0 for r >= r_zero, smooth in between."""
    if not 0 <= r_flat < r_zero:
        raise DomainError("smooth_window needs 0 <= r_flat < r_zero")
    t = (np.asarray(r, dtype=float) - r_flat) / (r_zero - r_flat)
    step = exp_step(t) if profile is CutoffProfile.EXPONENTIAL else smoothstep(t, order)
    return 1.0 - step


def cutoff(spec: CutoffSpec, modulus: np.ndarray) -> np.ndarray:
    """Evaluate a CutoffSpec on |ξ| (or on |x| for the dyadic profile)."""
    return smooth_window(spec.distance(modulus), spec.inner_flat, spec.outer_zero,
                         profile=spec.profile, order=spec.order)


def deterministic_sum(values: np.ndarray):
    """numpy's pairwise reduction over one contiguous buffer: same input, same bits."""
    return np.sum(np.ascontiguousarray(values).ravel())


class FieldService:
    """
    Transforms, convolutions, norms and geometric helpers on uniform grids.

    Fourier convention: F f(ξ) = (2π)^{-1} ∫ f(x) e^{-ix·ξ} dx, so F(f∗g) = 2π Ff·Fg.
    Every convolution is linear (never cyclic): operands are zero padded to twice the
    side before the transform.
    """

    @property
    def workers(self) -> int:
        return runtime_env.workers

    # --- transforms ---

    def _phase(self, grid: Grid) -> np.ndarray:
        k = np.fft.fftfreq(grid.n, d=grid.h) * 2.0 * np.pi
        offset = grid.n // 2 * grid.h
        p1 = np.exp(-1j * (grid.center[0] - offset) * k)
        p2 = np.exp(-1j * (grid.center[1] - offset) * k)
        return p2[:, None] * p1[None, :]

    def fft_forward(self, f: GridField) -> Spectrum:
        """Ff(ξ) ≈ (2π)^{-1} h² Σ f(x) e^{-ix·ξ} on the dual grid (FFT order)."""
        grid = f.grid
        raw = sp_fft.fft2(f.samples, workers=self.workers)
        coefficients = raw * self._phase(grid) * (grid.h ** 2 / (2.0 * np.pi))
        return Spectrum(grid=grid, coefficients=coefficients)

    def fft_inverse(self, spectrum: Spectrum) -> GridField:
        grid = spectrum.grid
        raw = spectrum.coefficients * (2.0 * np.pi / grid.h ** 2) / self._phase(grid)
        return GridField.from_array(grid, sp_fft.ifft2(raw, workers=self.workers))

    def apply_multiplier(self, f: GridField, multiplier: Multiplier, pad: bool = False) -> GridField:
        """
        F^{-1}[m(ξ)·Ff]. `multiplier` is an array on the dual grid or a function of |ξ|.
        With pad=True the transform runs on the doubled grid and the result is cut back.
        """
        work = self.pad(f) if pad else f
        if callable(multiplier):
            multiplier = multiplier(work.grid.frequency_modulus())
        spectrum = self.fft_forward(work)
        out = self.fft_inverse(Spectrum(grid=work.grid, coefficients=spectrum.coefficients * multiplier))
        return self.crop(out, f.grid) if pad else out

    # --- padding ---

    def pad(self, f: GridField, factor: int = 2) -> GridField:
        """Embed f in the middle of a grid `factor` times larger, zero outside."""
        big = f.grid.padded(factor)
        start = (big.n - f.grid.n) // 2
        out = np.zeros((big.n, big.n), dtype=np.complex128)
        out[start:start + f.grid.n, start:start + f.grid.n] = f.samples
        return GridField.from_array(big, out, **f.metadata)

    def crop(self, f: GridField, grid: Grid) -> GridField:
        start = (f.grid.n - grid.n) // 2
        return GridField.from_array(grid, f.samples[start:start + grid.n, start:start + grid.n], **f.metadata)

    # --- convolution ---

    def kernel_transform(self, displacement_samples: np.ndarray, real: bool = False) -> np.ndarray:
        """
        Transform of a kernel sampled on the doubled displacement grid: entry (a, b)
        holds k at ((b - n)h, (a - n)h). The result is reused by `apply_kernel_transform`.
        """
        wrapped = sp_fft.ifftshift(displacement_samples)
        if real:
            return sp_fft.rfft2(np.ascontiguousarray(wrapped.real), workers=self.workers)
        return sp_fft.fft2(wrapped, workers=self.workers)

    def apply_kernel_transform(self, samples: np.ndarray, transform: np.ndarray, h: float,
                               real: bool = False) -> np.ndarray:
        """h² Σ_y k(x - y) f(y) for all n×n grid points x."""
        n = samples.shape[0]
        size = (2 * n, 2 * n)
        if real:
            spec = sp_fft.rfft2(np.ascontiguousarray(samples.real), s=size, workers=self.workers)
            out = sp_fft.irfft2(spec * transform, s=size, workers=self.workers)
        else:
            spec = sp_fft.fft2(samples, s=size, workers=self.workers)
            out = sp_fft.ifft2(spec * transform, workers=self.workers)
        return out[:n, :n] * h * h

    def embed_kernel(self, kernel: GridField) -> np.ndarray:
        """Move a kernel sampled on an n-grid (displacement (j - n/2)h) onto the doubled displacement grid."""
        n = kernel.grid.n
        out = np.zeros((2 * n, 2 * n), dtype=np.complex128)
        out[n // 2:n // 2 + n, n // 2:n // 2 + n] = kernel.samples
        return out

    def convolve(self, f: GridField, k: GridField) -> GridField:
        """
        Discrete (k∗f)(x) = h² Σ_y k(x - y) f(y); k is read as a kernel whose centre
        sample is the zero displacement.
        """
        if f.grid.n != k.grid.n or not np.isclose(f.grid.h, k.grid.h, rtol=1e-14, atol=0.0):
            raise GridMismatchError("convolve needs fields on grids with the same n and h",
                                    left=f.grid.model_dump(), right=k.grid.model_dump())
        real = f.is_real() and k.is_real()
        transform = self.kernel_transform(self.embed_kernel(k), real=real)
        out = self.apply_kernel_transform(f.samples, transform, f.grid.h, real=real)
        return GridField.from_array(f.grid, out)

    def ball_integrals(self, density: GridField, radius: float) -> GridField:
        """∫_{B_R(x)} density for every grid point x (disc indicator convolution)."""
        grid = density.grid
        if radius < grid.h:
            raise DomainError("ball radius must be at least one grid spacing", radius=radius, h=grid.h)
        disc = GridField.from_array(
            Grid(n=grid.n, h=grid.h),
            (Grid(n=grid.n, h=grid.h).radius() <= radius).astype(float),
        )
        return self.convolve(density, disc)

    # --- reductions ---

    def lp_norm(self, f: GridField, p: float) -> float:
        """(h² Σ|f|^p)^{1/p}; max norm for p = inf."""
        if not p >= 1:
            raise DomainError(f"L^p norm needs p >= 1, got {p}")
        mod = np.abs(f.samples)
        peak = float(np.max(mod)) if mod.size else 0.0
        if np.isinf(p) or peak == 0.0:
            return peak
        total = deterministic_sum((mod / peak) ** p) * f.grid.h ** 2
        return peak * float(total) ** (1.0 / p)

    def inner(self, f: GridField, g: GridField, conjugate: bool = False) -> complex:
        """h² Σ f·g (bilinear unless `conjugate`)."""
        if not f.grid.same_as(g.grid):
            raise GridMismatchError("inner product needs fields on one grid")
        left = np.conj(f.samples) if conjugate else f.samples
        return complex(deterministic_sum(left * g.samples) * f.grid.h ** 2)

    def real_inner(self, f: np.ndarray, g: np.ndarray, h: float) -> float:
        return float(deterministic_sum(np.real(f) * np.real(g)) * h * h)

    # --- geometry ---

    def annulus_mask(self, grid: Grid, r_in: float, r_out: float) -> np.ndarray:
        if r_in < 0 or not r_in < r_out:
            raise DomainError("annulus needs 0 <= r_in < r_out", r_in=r_in, r_out=r_out)
        r = grid.radius()
        return (r >= r_in) & (r <= r_out)

    def restrict_annulus(self, f: GridField, r_in: float, r_out: float) -> List[Tuple[Tuple[float, float], complex]]:
        """All samples with r_in <= |x - center| <= r_out, row-major order."""
        mask = self.annulus_mask(f.grid, r_in, r_out)
        x1, x2 = f.grid.mesh()
        return [((float(a), float(b)), complex(v)) for a, b, v in zip(x1[mask], x2[mask], f.samples[mask])]

    def mirror_average(self, samples: np.ndarray) -> np.ndarray:
        """
        Average over the reflections x1 -> -x1, x2 -> -x2 and x1 <-> x2 about the grid
        centre. The first row and column have no mirror partner and come back as 0.
        """
        inner = samples[1:, 1:]
        avg = 0.25 * (inner + inner[::-1, :] + inner[:, ::-1] + inner[::-1, ::-1])
        out = np.zeros_like(samples)
        out[1:, 1:] = 0.5 * (avg + avg.T)
        return out

    def is_mirror_symmetric(self, f: GridField, tol: float = 1e-12) -> bool:
        """True when f equals its mirror_average off the first row and column."""
        s = f.samples
        scale = max(float(np.max(np.abs(s))), 1e-300)
        return float(np.max(np.abs(s[1:, 1:] - self.mirror_average(s)[1:, 1:]))) <= tol * scale

    def shift_lattice(self, f: GridField, cells: Tuple[int, int]) -> GridField:
        """f(· - a) for a = (k1 h, k2 h); samples shifted out are dropped, new ones are 0."""
        k1, k2 = int(cells[0]), int(cells[1])
        n = f.grid.n
        out = np.zeros_like(f.samples)
        if abs(k1) < n and abs(k2) < n:
            src_rows = slice(max(0, -k2), n - max(0, k2))
            dst_rows = slice(max(0, k2), n - max(0, -k2))
            src_cols = slice(max(0, -k1), n - max(0, k1))
            dst_cols = slice(max(0, k1), n - max(0, -k1))
            out[dst_rows, dst_cols] = f.samples[src_rows, src_cols]
        return f.with_samples(out)

    def radial_derivative(self, f: GridField) -> np.ndarray:
        """∂_r f by fourth-order central differences (one-sided rows at the border are zero)."""
        s, h = f.samples, f.grid.h
        d1 = np.zeros_like(s)
        d2 = np.zeros_like(s)
        d1[:, 2:-2] = (-s[:, 4:] + 8 * s[:, 3:-1] - 8 * s[:, 1:-3] + s[:, :-4]) / (12 * h)
        d2[2:-2, :] = (-s[4:, :] + 8 * s[3:-1, :] - 8 * s[1:-3, :] + s[:-4, :]) / (12 * h)
        x1, x2 = f.grid.mesh()
        r = np.hypot(x1 - f.grid.center[0], x2 - f.grid.center[1])
        r = np.where(r > 0, r, 1.0)
        return (d1 * (x1 - f.grid.center[0]) + d2 * (x2 - f.grid.center[1])) / r

    def envelope_decay(self, f: GridField, r1: float, r2: float,
                       width: float = 2.0 * np.pi) -> Tuple[float, float, float]:
        """
        Least-squares fit of log(max |f| on annuli of the given width) against log r.

        Returns:
            (exponent, amplitude, rms residual of the regression)
        """
        if not 0 < r1 < r2:
            raise DomainError("envelope fit needs 0 < r1 < r2")
        r = f.grid.radius()
        mod = np.abs(f.samples)
        edges = np.arange(r1, r2 + 1e-12, width)
        if edges[-1] < r2:
            edges = np.append(edges, r2)
        radii, peaks = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (r >= lo) & (r <= hi)
            if not np.any(mask):
                continue
            peak = float(np.max(mod[mask]))
            if peak > 0.0:
                radii.append(float(r[mask][np.argmax(mod[mask])]))
                peaks.append(peak)
        if len(peaks) < 2:
            raise DomainError("field vanishes on the fit range", r1=r1, r2=r2)
        x, y = np.log(radii), np.log(peaks)
        slope, intercept = np.polyfit(x, y, 1)
        residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
        return float(slope), float(np.exp(intercept)), residual

    def annulus_rows(self, f: GridField, r_in: float, r_out: float) -> List[Tuple[float, float, float, float]]:
        """(x1, x2, Re, Im) rows for the annulus CSV export."""
        return [(x[0], x[1], v.real, v.imag) for x, v in self.restrict_annulus(f, r_in, r_out)]


# --- Create Singleton Instance ---
field_service = FieldService()
