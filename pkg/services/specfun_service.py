import math
from fractions import Fraction
from typing import Iterable, Tuple, Union

import numpy as np
import structlog

from services.errors import DomainError

logger = structlog.get_logger(__name__)

ArrayLike = Union[float, Iterable[float], np.ndarray]

EULER_GAMMA = 0.57721566490153286060651209008240243
SQRT_2_OVER_PI = 0.79788456080286535587989211986876373
PHI_FAR_CONSTANT = 1.0 / (2.0 * math.sqrt(2.0 * math.pi))  # |Φ(r)|·r^{1/2} as r -> ∞

# Empirical sup of |Φ(r)| / min{1+|log r|, r^{-1/2}} over [1e-6, 1e4];
# the ratio increases towards PHI_FAR_CONSTANT, so the regression value sits just below it.
PHI_BOUND_REFERENCE = 0.19947


def _series_tables(terms: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Power-series coefficients in t = r²/4, built in exact rational arithmetic:
    J0: (-1)^k/(k!)², Y0 correction: (-1)^{k+1} H_k/(k!)².
    """
    j0, y0 = [], []
    factorial = 1
    harmonic = Fraction(0)
    for k in range(terms):
        if k:
            factorial *= k
            harmonic += Fraction(1, k)
        coef = Fraction((-1) ** k, factorial * factorial)
        j0.append(float(coef))
        y0.append(float(-coef * harmonic))
    return np.array(j0), np.array(y0)


def _hankel_table(terms: int) -> np.ndarray:
    """i^k a_k(0) with a_k(0) = Π_{j≤k} (-(2j-1)²) / (k! 8^k)."""
    out = []
    a = Fraction(1)
    for k in range(terms):
        if k:
            a *= Fraction(-(2 * k - 1) ** 2, 8 * k)
        out.append(complex(1j ** k) * float(a))
    return np.array(out, dtype=np.complex128)


class SpecialFunctionService:
    """
    Order-zero Bessel/Hankel evaluation and the outgoing fundamental solution
    Φ(x) = (i/4) H0(|x|) of the planar Helmholtz operator at wavenumber 1.

    Two branches: the log-split power series below CROSSOVER_RADIUS, the
    optimally truncated Hankel expansion above it.
    """
    CROSSOVER_RADIUS = 12.0
    SERIES_TERMS = 48
    ASYMPTOTIC_TERMS = 48
    MIN_RADIUS = 1e-6
    MAX_RADIUS = 1e4

    def __init__(self):
        self._j0_coef, self._y0_coef = _series_tables(self.SERIES_TERMS)
        self._hankel_coef = _hankel_table(self.ASYMPTOTIC_TERMS)
        logger.debug("specfun tables ready", series_terms=self.SERIES_TERMS,
                     crossover=self.CROSSOVER_RADIUS)

    # --- branches ---

    def hankel0_series(self, r: np.ndarray) -> np.ndarray:
        """J0 + iY0 from the power series; accurate for r up to ~16."""
        r = np.asarray(r, dtype=float)
        t = 0.25 * r * r
        j0 = np.zeros_like(t)
        corr = np.zeros_like(t)
        for cj, cy in zip(self._j0_coef[::-1], self._y0_coef[::-1]):
            j0 = j0 * t + cj
            corr = corr * t + cy
        y0 = (2.0 / math.pi) * ((np.log(0.5 * r) + EULER_GAMMA) * j0 + corr)
        return j0 + 1j * y0

    def hankel0_asymptotic(self, r: np.ndarray) -> np.ndarray:
        """Hankel expansion truncated near its smallest term (k <= 2r)."""
        r = np.asarray(r, dtype=float)
        z = 1.0 / r
        total = np.zeros(r.shape, dtype=np.complex128)
        power = np.ones(r.shape, dtype=float)
        for k, c in enumerate(self._hankel_coef):
            total += np.where(k <= 2.0 * r, c * power, 0.0)
            power = power * z
        return np.sqrt(2.0 / (math.pi * r)) * np.exp(1j * (r - 0.25 * math.pi)) * total

    # --- public operations ---

    def _validated(self, r: ArrayLike) -> np.ndarray:
        arr = np.asarray(r, dtype=float)
        if arr.size == 0:
            return arr
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise DomainError("Hankel/Φ evaluation needs finite r > 0; r = 0 is handled by the caller")
        return arr

    def eval_hankel0(self, r: ArrayLike) -> Union[complex, np.ndarray]:
        """H0^(1)(r) = J0(r) + iY0(r) for r > 0."""
        arr = self._validated(r)
        out = np.empty(arr.shape, dtype=np.complex128)
        small = arr < self.CROSSOVER_RADIUS
        if np.any(small):
            out[small] = self.hankel0_series(arr[small])
        if np.any(~small):
            out[~small] = self.hankel0_asymptotic(arr[~small])
        return complex(out) if out.ndim == 0 else out

    def eval_phi(self, r: ArrayLike) -> Union[complex, np.ndarray]:
        """Φ(r) = (i/4) H0(r): Re Φ = -Y0/4, Im Φ = J0/4."""
        return 0.25j * self.eval_hankel0(r)

    def eval_re_phi(self, r: ArrayLike) -> Union[float, np.ndarray]:
        value = self.eval_phi(r)
        return value.real if isinstance(value, np.ndarray) else value.real

    def phi_asymptotic(self, r: ArrayLike) -> np.ndarray:
        arr = self._validated(r)
        return PHI_FAR_CONSTANT * arr ** -0.5 * np.exp(1j * (arr + 0.25 * math.pi))

    def phi_small_r(self, r: ArrayLike) -> np.ndarray:
        """Leading real part near the origin: (1/2π)(log(2/r) - γ)."""
        arr = self._validated(r)
        return (np.log(2.0 / arr) - EULER_GAMMA) / (2.0 * math.pi)

    @staticmethod
    def bound_profile(r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.minimum(1.0 + np.abs(np.log(r)), r ** -0.5)

    def check_phi_bound(self, samples: ArrayLike) -> float:
        """
        Empirical constant C0 in |Φ(r)| <= C0 min{1+|log r|, r^{-1/2}}.

        Args:
            samples: radii; a sweep meant as a reference should span [1e-6, 1e4].

        Returns:
            The supremum of the ratio over the samples.
        """
        r = self._validated(samples)
        if r.size == 0:
            raise DomainError("check_phi_bound needs at least one radius")
        if r.min() > self.MIN_RADIUS * 1.0001 or r.max() < self.MAX_RADIUS * 0.9999:
            logger.info("phi bound fitted on a partial range", r_min=float(r.min()), r_max=float(r.max()))
        ratio = np.abs(self.eval_phi(r)) / self.bound_profile(r)
        return float(np.max(ratio))

    # --- extremal values of Re Φ used by the positive-subspace construction ---

    def psi_upper(self, t: float, points: int = 4000) -> float:
        """Ψ*(t) = inf over 0 < r <= t of Re Φ(r)."""
        if t <= 0:
            raise DomainError("Ψ*(t) needs t > 0")
        lo = max(t * 1e-4, self.MIN_RADIUS)
        r = np.unique(np.append(np.geomspace(min(lo, t), t, points), t))
        return float(np.min(self.eval_phi(r).real))

    def psi_lower(self, t: float, spacing: float = 0.005) -> float:
        """Ψ_*(t) = sup over r >= t of |Re Φ(r)|."""
        if t <= 0:
            raise DomainError("Ψ_*(t) needs t > 0")
        far = max(60.0, t + 60.0)
        near = np.geomspace(t, min(far, max(t * 100.0, 1.0)), 2000)
        r = np.unique(np.concatenate([near, np.arange(t, far, spacing)]))
        value = float(np.max(np.abs(self.eval_phi(r).real)))
        # beyond `far` the modulus bound PHI_FAR_CONSTANT·r^{-1/2}(1 + 1/(8r)) is already smaller
        return max(value, PHI_FAR_CONSTANT * far ** -0.5 * (1.0 + 1.0 / (8.0 * far)))


# --- Create Singleton Instance ---
specfun_service = SpecialFunctionService()
