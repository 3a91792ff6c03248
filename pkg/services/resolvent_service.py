import math
from collections import OrderedDict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from modals.field import Grid, GridField
from modals.kernel import (
    ETA_CUTOFF, PHI_COLLAR, PSI_CUTOFF, CutoffSpec, DecompositionBounds, DyadicPiece, KernelDecomposition,
)
from modals.variational import Coefficient
from services.errors import DomainError, GridMismatchError, ResolutionError
from services.field_service import FieldService, cutoff, field_service, smooth_window
from services.specfun_service import EULER_GAMMA, SpecialFunctionService, specfun_service

logger = structlog.get_logger(__name__)

ORIGIN_RULES = ("lattice", "cell-average")


class ResolventService:
    """
    The outgoing resolvent R = (-Δ - 1 - i0)^{-1} on uniform grids, its real part,
    the Birman-Schwinger operator K and the Φ = Φ₁ + Φ₂ splitting.

    The kernel backend convolves with sampled Φ on the doubled grid. The sample at
    the origin is replaced according to `origin_rule`:
      lattice       value making the punctured trapezoid sum exact for (log r)·smooth
                    to O(h⁴ log h); uses the lattice zeta constant below.
      cell-average  mean of the leading small-r expansion over the h×h cell.
    """
    # -ζ'_{Z²}(0)/2 style constant of the corrected trapezoid rule for log|x|.
    LATTICE_LOG_CONSTANT = 1.3105329259115095
    # mean of log r over [-1/2, 1/2]² minus log(1/2)
    CELL_LOG_MEAN = 0.5 * (math.log(2.0) + 0.5 * math.pi - 3.0)

    TAPER_FRACTION = 0.1
    EPS_SEQUENCE = (0.2, 0.1, 0.05)
    SUPPORT_TOLERANCE = 1e-8
    MIN_DUAL_RESOLUTION = 1.0 / 24.0
    RADIAL_TABLE_STEP = 0.02
    CACHE_SIZE = 4

    def __init__(self, specfun: SpecialFunctionService, fields: FieldService):
        self.specfun = specfun
        self.fields = fields
        self._transforms: "OrderedDict[tuple, np.ndarray]" = OrderedDict()

    # --- kernel sampling ---

    def origin_value(self, h: float, rule: str = "lattice") -> complex:
        """Value assigned to the r = 0 sample of Φ on a grid of spacing h."""
        smooth = (math.log(2.0) - EULER_GAMMA) / (2.0 * math.pi)
        if rule == "lattice":
            real = -(math.log(h) - self.LATTICE_LOG_CONSTANT) / (2.0 * math.pi) + smooth
        elif rule == "cell-average":
            mean_log = math.log(0.5 * h) + self.CELL_LOG_MEAN
            real = (math.log(2.0) - mean_log - EULER_GAMMA) / (2.0 * math.pi)
        else:
            raise DomainError(f"unknown origin rule {rule!r}; use one of {ORIGIN_RULES}")
        return complex(real, 0.25)

    def sample_phi(self, grid: Grid, rule: str = "lattice", taper_radius: Optional[float] = None) -> np.ndarray:
        """Φ(x - center) on `grid` with the origin rule applied and an optional radial taper."""
        r = grid.radius()
        out = np.empty(r.shape, dtype=np.complex128)
        positive = r > 0
        out[positive] = self.specfun.eval_phi(r[positive])
        out[~positive] = self.origin_value(grid.h, rule)
        if taper_radius is not None:
            out *= smooth_window(r, (1.0 - self.TAPER_FRACTION) * taper_radius, taper_radius)
        return out

    def _kernel_transform(self, grid: Grid, rule: str, real: bool) -> np.ndarray:
        key = (grid.n, float(grid.h), rule, real)
        cached = self._transforms.get(key)
        if cached is not None:
            self._transforms.move_to_end(key)
            return cached
        displacement = Grid(n=2 * grid.n, h=grid.h)
        samples = self.sample_phi(displacement, rule, taper_radius=grid.side)
        transform = self.fields.kernel_transform(samples, real=real)
        self._transforms[key] = transform
        if len(self._transforms) > self.CACHE_SIZE:
            self._transforms.popitem(last=False)
        logger.debug("kernel transform built", n=grid.n, h=grid.h, rule=rule, real=real)
        return transform

    def _require_resolution(self, grid: Grid):
        if not grid.resolves_wavelength:
            raise ResolutionError("resolvent application needs h <= 2π/16 (16 points per wavelength)", h=grid.h)

    def _support_flag(self, f: GridField) -> Dict[str, object]:
        mod = np.abs(f.samples)
        total = float(np.sum(mod))
        if total == 0.0:
            return {"support_violation": False, "outside_mass": 0.0}
        outside = float(np.sum(mod[f.grid.radius() > 0.25 * f.grid.side])) / total
        violated = outside > self.SUPPORT_TOLERANCE
        if violated:
            logger.warning("source mass outside L/4", outside_fraction=outside, n=f.grid.n)
        return {"support_violation": violated, "outside_mass": outside}

    # --- resolvent backends ---

    def apply_resolvent_kernel(self, f: GridField, origin_rule: str = "lattice") -> GridField:
        """u = Φ∗f (outgoing); metadata carries the support-violation flag."""
        self._require_resolution(f.grid)
        transform = self._kernel_transform(f.grid, origin_rule, real=False)
        u = self.fields.apply_kernel_transform(f.samples, transform, f.grid.h, real=False)
        return GridField.from_array(f.grid, u, backend="kernel", origin_rule=origin_rule, **self._support_flag(f))

    def apply_R(self, f: GridField, origin_rule: str = "lattice") -> GridField:
        """**R**f = (Re Φ)∗f for real f."""
        if not f.is_real(tol=1e-14):
            raise DomainError("the real-part operator **R** acts on real fields only")
        self._require_resolution(f.grid)
        transform = self._kernel_transform(f.grid, origin_rule, real=True)
        u = self.fields.apply_kernel_transform(f.samples.real, transform, f.grid.h, real=True)
        return GridField.from_array(f.grid, u, backend="kernel-real", origin_rule=origin_rule)

    def apply_resolvent_multiplier(self, f: GridField, eps: float) -> GridField:
        """u_ε = F^{-1}[(|ξ|² - 1 - iε)^{-1} Ff] on the doubled grid."""
        if not eps > 0:
            raise DomainError(f"limiting absorption needs eps > 0, got {eps}")
        u = self.fields.apply_multiplier(f, lambda m: 1.0 / (m * m - 1.0 - 1j * eps), pad=True)
        return u.with_samples(u.samples, backend="multiplier", eps=eps)

    def apply_resolvent_extrapolated(self, f: GridField, eps_sequence: Sequence[float] = EPS_SEQUENCE) -> GridField:
        """
        ε → 0 limit of u_ε by polynomial (Richardson) extrapolation. Each u_ε is first
        divided by its known far-field factor k_ε^{-1/2} e^{i(k_ε - 1)|x - x_f|},
        k_ε = (1 + iε)^{1/2}, x_f the |f|-centroid, so what remains is smooth in ε.
        """
        eps = np.asarray(eps_sequence, dtype=float)
        if eps.size < 2 or np.any(eps <= 0) or len(set(eps.tolist())) != eps.size:
            raise DomainError("extrapolation needs at least two distinct positive eps")
        mod = np.abs(f.samples)
        x1, x2 = f.grid.mesh()
        weight = float(np.sum(mod))
        if weight == 0.0:
            return GridField.zeros(f.grid)
        c1, c2 = float(np.sum(mod * x1)) / weight, float(np.sum(mod * x2)) / weight
        r = np.hypot(x1 - c1, x2 - c2)

        total = np.zeros((f.grid.n, f.grid.n), dtype=np.complex128)
        for i, e in enumerate(eps):
            k = np.sqrt(1.0 + 1j * e)
            u = self.apply_resolvent_multiplier(f, float(e)).samples
            compensated = u * np.sqrt(k) * np.exp(-1j * (k - 1.0) * r)
            lagrange = np.prod([eps[j] / (eps[j] - e) for j in range(eps.size) if j != i])
            total += lagrange * compensated
        return GridField.from_array(f.grid, total, backend="multiplier-extrapolated",
                                    eps=[float(e) for e in eps], **self._support_flag(f))

    # --- Birman-Schwinger operator ---

    def apply_K(self, v: GridField, Q: Coefficient, p: float, origin_rule: str = "lattice") -> GridField:
        """Kv = Q^{1/p} **R**(Q^{1/p} v)."""
        if not Q.samples.grid.same_as(v.grid):
            raise GridMismatchError("Q and v must share a grid")
        if np.min(Q.values) < 0:
            raise DomainError("Q must be nonnegative")
        root = Q.root(p)
        inner = self.apply_R(v.with_samples(root * v.samples.real), origin_rule)
        return v.with_samples(root * inner.samples.real)

    @staticmethod
    def admissible_pair(t: float, q: float) -> bool:
        """Exponents (t, q) for which ‖Rf‖_q <= C‖f‖_t holds in the plane."""
        gap = 1.0 / t - 1.0 / q
        return 1.0 <= t < 4.0 / 3.0 and q > 4.0 and 2.0 / 3.0 - 1e-12 <= gap < 1.0

    # --- diagnostics ---

    def inner_half_mask(self, grid: Grid) -> np.ndarray:
        x1, x2 = grid.mesh()
        quarter = 0.25 * grid.side
        return (np.abs(x1 - grid.center[0]) <= quarter) & (np.abs(x2 - grid.center[1]) <= quarter)

    def relative_difference(self, u: GridField, w: GridField) -> float:
        """Relative L² difference of two fields on the inner half-grid."""
        mask = self.inner_half_mask(u.grid)
        ref = float(np.sqrt(np.sum(np.abs(w.samples[mask]) ** 2)))
        return float(np.sqrt(np.sum(np.abs(u.samples[mask] - w.samples[mask]) ** 2))) / ref

    def spectral_residual(self, u: GridField, f: GridField, k: float = 1.0) -> float:
        """‖(-Δ - k²)u - f‖₂ / ‖f‖₂ on the inner half-grid; u is smoothly windowed first."""
        grid = u.grid
        r = grid.radius()
        window = smooth_window(r, 0.36 * grid.side, 0.48 * grid.side)
        applied = self.fields.apply_multiplier(u.with_samples(u.samples * window), lambda m: m * m - k * k)
        mask = self.inner_half_mask(grid)
        diff = applied.samples[mask] - f.samples[mask]
        return float(np.sqrt(np.sum(np.abs(diff) ** 2) / np.sum(np.abs(f.samples[mask]) ** 2)))

    def radiation_defect(self, u: GridField, r_in: float, r_out: float) -> float:
        """‖∂_r u - iu‖ / ‖u‖ over the annulus r_in <= |x| <= r_out."""
        mask = self.fields.annulus_mask(u.grid, r_in, r_out)
        if not np.any(mask):
            raise DomainError("empty annulus", r_in=r_in, r_out=r_out)
        dr = self.fields.radial_derivative(u)
        num = np.sum(np.abs(dr[mask] - 1j * u.samples[mask]) ** 2)
        return float(np.sqrt(num / np.sum(np.abs(u.samples[mask]) ** 2)))

    # --- Φ = Φ₁ + Φ₂ ---

    def _j0(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        positive = x > 0
        if np.any(positive):
            out[positive] = self.specfun.eval_hankel0(x[positive]).real
        return out

    def phi1_real_radial(self, r: np.ndarray, spec: CutoffSpec = PSI_CUTOFF) -> np.ndarray:
        """
        Re Φ₁(r) = (2π)^{-1} PV ∫ χ(ρ) J0(ρr) ρ/(ρ² - 1) dρ, folded about ρ = 1 so the
        integrand (g(1+t) - g(1-t))/t is regular; Gauss-Legendre on the flat and the
        transition panels.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        panels = ((0.0, spec.inner_flat), (spec.inner_flat, spec.outer_zero))
        for start in range(0, r.size, 2048):
            rr = r[start:start + 2048]
            r_top = float(np.max(rr)) if rr.size else 0.0
            total = np.zeros_like(rr)
            for lo, hi in panels:
                nodes = int(math.ceil(0.6 * r_top * (hi - lo))) + 32
                t, w = leggauss(nodes)
                t = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
                w = 0.5 * (hi - lo) * w
                chi = cutoff(spec, 1.0 + t)
                plus = self._j0(np.outer(rr, 1.0 + t)) * ((1.0 + t) / (2.0 + t))
                minus = self._j0(np.outer(rr, 1.0 - t)) * ((1.0 - t) / (2.0 - t))
                total += ((plus - minus) * (chi * w / t)).sum(axis=1)
            out[start:start + 2048] = total / (2.0 * math.pi)
        return out

    def build_decomposition(self, grid: Grid, origin_rule: str = "lattice",
                            psi_spec: CutoffSpec = PSI_CUTOFF) -> KernelDecomposition:
        """Φ₁ = F^{-1}[ψ̂·FΦ] evaluated as a radial inverse transform; Φ₂ = Φ - Φ₁."""
        if grid.dual_spacing > self.MIN_DUAL_RESOLUTION * (1 + 1e-12):
            raise ResolutionError("dual spacing 2π/L must be <= 1/24 to resolve the ψ collar",
                                  dual_spacing=grid.dual_spacing)
        grid = Grid(n=grid.n, h=grid.h)
        r = grid.radius()
        phi = self.sample_phi(grid, origin_rule)

        table = np.arange(0.0, float(r.max()) + 2 * self.RADIAL_TABLE_STEP, self.RADIAL_TABLE_STEP)
        spline = CubicSpline(table, self.phi1_real_radial(table, psi_spec))
        phi1 = spline(r) + 0.25j * self._j0(r)
        phi2 = phi - phi1
        logger.info("decomposition built", n=grid.n, h=grid.h, table_points=table.size)
        return KernelDecomposition(
            phi=GridField.from_array(grid, phi),
            phi1=GridField.from_array(grid, phi1),
            phi2=GridField.from_array(grid, phi2),
            psi_spec=psi_spec,
            origin_rule=origin_rule,
        )

    def dyadic_partition(self, grid: Grid, j_max: int, eta: Optional[CutoffSpec] = None) -> List[np.ndarray]:
        """φ₀ = η, φ_j = η(·/2^j) - η(·/2^{j-1}) for j = 1..j_max."""
        eta = eta or ETA_CUTOFF
        r = grid.radius()
        pieces = [cutoff(eta, r)]
        for j in range(1, j_max + 1):
            pieces.append(cutoff(eta, r / 2.0 ** j) - cutoff(eta, r / 2.0 ** (j - 1)))
        return pieces

    def dyadic_piece(self, decomp: KernelDecomposition, j: int) -> DyadicPiece:
        """Qʲ = F^{-1}[χ_φ·F(Φ₁φ_j)], i.e. (Φ₁φ_j)∗φ."""
        grid = decomp.grid
        if j < 0 or 2.0 ** (j + 1) >= 0.5 * grid.side:
            raise DomainError(f"dyadic index {j} needs 2^(j+1) < L/2 = {0.5 * grid.side:.4g}")
        phi_j = self.dyadic_partition(grid, j, decomp.eta_spec)[j]
        localized = decomp.phi1.with_samples(decomp.phi1.samples * phi_j)
        field = self.fields.apply_multiplier(localized, lambda m: cutoff(decomp.phi_spec, m))
        lo = 0.0 if j == 0 else 2.0 ** (j - 1)
        return DyadicPiece(index=j, field=field, annulus=(lo, 2.0 ** (j + 1)))

    def fit_decomposition_bounds(self, decomp: KernelDecomposition,
                                 phi1_range: Tuple[float, float] = (10.0, 200.0),
                                 phi2_range: Tuple[float, float] = (10.0, 100.0)) -> DecompositionBounds:
        """Empirical constants of the Φ₁ and Φ₂ bounds plus envelope decay exponents."""
        grid = decomp.grid
        r = grid.radius()
        positive = r > 0
        c1 = float(np.max(np.abs(decomp.phi1.samples) * np.sqrt(1.0 + r)))
        profile = np.minimum(1.0 + np.abs(np.log(r[positive])), r[positive] ** -3.0)
        c2 = float(np.max(np.abs(decomp.phi2.samples[positive]) / profile))

        half = 0.5 * grid.side
        fits, exps = {}, {}
        for name, field, (r1, r2) in (("phi1", decomp.phi1, phi1_range), ("phi2", decomp.phi2, phi2_range)):
            r2 = min(r2, half)
            if r1 < r2:
                exps[name] = self.fields.envelope_decay(field, r1, r2)[0]
                fits[name] = (r1, r2)
        return DecompositionBounds(c1=c1, c2=c2, phi1_exponent=exps.get("phi1"),
                                   phi2_exponent=exps.get("phi2"), fit_ranges=fits)


# --- Create Singleton Instance ---
resolvent_service = ResolventService(specfun=specfun_service, fields=field_service)
