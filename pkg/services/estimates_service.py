import math
from typing import List, Optional, Sequence

import numpy as np
import structlog

from modals.estimates import (
    BoundednessRow, BoundednessScan, DyadicRow, DyadicScan, EndpointRow, EndpointScan,
    TruncationRow, TruncationScan, VanishingRow, VanishingScan,
)
from modals.field import Grid, GridField, Spectrum
from modals.kernel import CutoffSpec, KernelDecomposition
from services.errors import DomainError
from services.field_service import FieldService, cutoff, field_service
from services.resolvent_service import ResolventService, resolvent_service

logger = structlog.get_logger(__name__)

# Probes of the truncation scan: Ff supported in ||ξ| - 1| <= 1/2.
PROBE_COLLAR = CutoffSpec(inner_flat=0.25, outer_zero=0.5)


def _bump(r2: np.ndarray) -> np.ndarray:
    """(1 - |x|²)²₊ from |x|²."""
    return np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)


class EstimatesService:
    """
    Empirical operator-norm experiments around the resolvent estimate. Every
    sup over a probe family is a lower bound for the true operator norm.
    """
    PROBE_COUNT = 8
    ENDPOINT_GRID = Grid(n=1024, h=1.0 / 256.0)
    BOUNDEDNESS_GRID = Grid(n=2048, h=1.0 / 16.0)
    BUMP_L1 = math.pi / 3.0
    # the worst ratio may grow at most this much when the family is enlarged
    STABLE_GROWTH = 1.5
    MIN_CELLS_PER_BUMP = 8

    def __init__(self, resolvent: ResolventService, fields: FieldService):
        self.resolvent = resolvent
        self.fields = fields

    # --- probes ---

    def collar_probes(self, grid: Grid, count: int, seed: int, collar: CutoffSpec) -> List[GridField]:
        """
        Seeded real probes filtered to the collar around |ξ| = 1. Probe 0 is
        F^{-1}[χ] itself; the rest are filtered noise under random Gaussian envelopes.
        """
        rng = np.random.default_rng(seed)
        modulus = grid.frequency_modulus()
        ring = self.fields.fft_inverse(Spectrum(grid=grid, coefficients=cutoff(collar, modulus).astype(complex)))
        probes = [ring.with_samples(ring.samples.real)]
        x1, x2 = grid.mesh()
        eighth = grid.side / 8.0
        for _ in range(1, count):
            c1, c2 = rng.uniform(-0.5 * eighth, 0.5 * eighth, size=2)
            width = rng.uniform(2.0, max(2.5, 0.5 * eighth))
            envelope = np.exp(-((x1 - c1) ** 2 + (x2 - c2) ** 2) / (2.0 * width ** 2))
            noisy = GridField.from_array(grid, rng.standard_normal((grid.n, grid.n)) * envelope)
            filtered = self.fields.apply_multiplier(noisy, lambda m: cutoff(collar, m))
            probes.append(filtered.with_samples(filtered.samples.real))
        return probes

    def _periodic_convolve(self, kernel: GridField, f: GridField) -> GridField:
        """2π F^{-1}[Fk·Ff] on the grid torus."""
        fk = self.fields.fft_forward(kernel).coefficients
        ff = self.fields.fft_forward(f).coefficients
        return self.fields.fft_inverse(Spectrum(grid=f.grid, coefficients=2.0 * math.pi * fk * ff))

    @staticmethod
    def _slope(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
        if len(x) < 2:
            return None
        return float(np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)[0])

    # --- scans ---

    def dyadic_norm_scan(self, decomp: KernelDecomposition, j_range: Sequence[int],
                         probes: int = PROBE_COUNT, seed: int = 0) -> DyadicScan:
        """(j, ‖Qʲ‖_∞, worst ‖Qʲ∗f‖₂/‖f‖_{6/5}) for j in the closed range."""
        grid = decomp.grid
        j_lo, j_hi = int(j_range[0]), int(j_range[1])
        if j_lo < 0 or j_lo > j_hi or 2.0 ** (j_hi + 1) >= 0.5 * grid.side:
            raise DomainError(f"j range {j_lo}..{j_hi} needs 2^(j+1) < L/2 = {0.5 * grid.side:.4g}")
        family = self.collar_probes(grid, probes, seed, decomp.phi_spec)
        norms = [self.fields.lp_norm(f, 1.2) for f in family]
        r = grid.radius()

        rows, excluded = [], []
        for j in range(j_lo, j_hi + 1):
            piece = self.resolvent.dyadic_piece(decomp, j)
            lo, hi = piece.annulus
            if not np.any((r > lo) & (r < hi)):
                excluded.append(j)
                logger.warning("dyadic annulus holds no sample", j=j)
                continue
            ratio = max(
                self.fields.lp_norm(self._periodic_convolve(piece.field, f), 2.0) / norm
                for f, norm in zip(family, norms) if norm > 0
            )
            sup = float(np.max(np.abs(piece.field.samples)))
            rows.append(DyadicRow(j=j, sup_norm=sup, ratio=ratio))
            logger.info("dyadic row", j=j, sup_norm=sup, ratio=ratio)

        js = [row.j for row in rows]
        return DyadicScan(
            rows=rows,
            excluded=excluded,
            sup_slope=self._slope(js, [math.log2(row.sup_norm) for row in rows]),
            ratio_slope=self._slope(js, [math.log2(row.ratio) for row in rows]),
        )

    def truncated_phi1_scan(self, decomp: KernelDecomposition, radii: Sequence[float], p: float,
                            probes: int = PROBE_COUNT, seed: int = 0) -> TruncationScan:
        """Worst ‖[1_{|x|>=R}Φ₁]∗f‖_p/‖f‖_{p'} per R and its fitted power of R."""
        if p <= 2:
            raise DomainError("truncation scan needs p > 2")
        lambda_p = 0.5 - 3.0 / p
        flagged = p <= 6.0
        if flagged:
            logger.warning("no decay predicted for p <= 6", p=p, lambda_p=lambda_p)
        p_dual = p / (p - 1.0)
        grid = decomp.grid
        family = self.collar_probes(grid, probes, seed, PROBE_COLLAR)
        norms = [self.fields.lp_norm(f, p_dual) for f in family]
        r = grid.radius()

        rows = []
        for radius in sorted(float(x) for x in radii):
            if radius < 0:
                raise DomainError("truncation radius must be nonnegative", radius=radius)
            kernel = decomp.phi1.with_samples(np.where(r >= radius, decomp.phi1.samples, 0.0))
            ratio = max(
                self.fields.lp_norm(self.fields.convolve(f, kernel), p) / norm
                for f, norm in zip(family, norms) if norm > 0
            )
            rows.append(TruncationRow(radius=radius, ratio=ratio))
            logger.info("truncation row", radius=radius, ratio=ratio)

        fit = [row for row in rows if row.radius > 0 and row.ratio > 0]
        exponent = self._slope([math.log(row.radius) for row in fit], [math.log(row.ratio) for row in fit])
        return TruncationScan(p=p, lambda_p=lambda_p, rows=rows, exponent=exponent, flagged=flagged)

    def endpoint_counterexample(self, k_values: Sequence[float], grid: Optional[Grid] = None) -> EndpointScan:
        """sup|Φ∗f_k| for f_k(x) = k² f(kx), f = (1 - |x|²)²₊; grows like ‖f‖₁ log k / (2π)."""
        grid = grid or self.ENDPOINT_GRID
        x1, x2 = grid.mesh()
        r2 = x1 * x1 + x2 * x2
        rows = []
        for k in k_values:
            if k <= 0:
                raise DomainError("dilation k must be positive", k=k)
            fk = GridField.from_array(grid, k * k * _bump(k * k * r2))
            u = self.resolvent.apply_resolvent_kernel(fk)
            flagged = 1.0 / k < self.MIN_CELLS_PER_BUMP * grid.h
            if flagged:
                logger.warning("bump under-resolved", k=k, h=grid.h)
            rows.append(EndpointRow(
                k=float(k),
                sup_modulus=float(np.max(np.abs(u.samples))),
                sup_real=float(np.max(np.abs(u.samples.real))),
                l1_norm=self.fields.lp_norm(fk, 1.0),
                flagged=flagged,
            ))
            logger.info("endpoint row", k=k, sup=rows[-1].sup_modulus)

        good = [row for row in rows if not row.flagged]
        logs = [math.log(row.k) for row in good]
        return EndpointScan(
            rows=rows,
            bump_l1=self.BUMP_L1,
            target_slope=self.BUMP_L1 / (2.0 * math.pi),
            slope=self._slope(logs, [row.sup_modulus for row in good]),
            real_slope=self._slope(logs, [row.sup_real for row in good]),
        )

    def boundedness_probe(self, p_values: Sequence[float], family_sizes: Sequence[int],
                          seed: int = 0, grid: Optional[Grid] = None) -> BoundednessScan:
        """
        Worst ‖**R**f‖_p/‖f‖_{p'} over nested families of rescaled Gaussians
        f(λx), λ in [1/8, 8], and modulated bumps cos(ω·x)g(x), |ω| <= 4.
        """
        grid = grid or self.BOUNDEDNESS_GRID
        for p in p_values:
            if not self.resolvent.admissible_pair(p / (p - 1.0), p):
                raise DomainError(f"(p', p) outside the admissible range for p = {p}")
        if not family_sizes or min(family_sizes) < 1:
            raise DomainError("family sizes must be positive")
        rng = np.random.default_rng(seed)
        x1, x2 = grid.mesh()
        r2 = x1 * x1 + x2 * x2

        total = max(family_sizes)
        ratios = np.zeros((total, len(p_values)))
        for i in range(total):
            if i % 2 == 0:
                lam = math.exp(rng.uniform(math.log(1.0 / 8.0), math.log(8.0)))
                samples = np.exp(-0.5 * lam * lam * r2)
            else:
                omega = rng.uniform(0.0, 4.0)
                angle = rng.uniform(0.0, 2.0 * math.pi)
                width = rng.uniform(1.0, 4.0)
                samples = np.cos(omega * (math.cos(angle) * x1 + math.sin(angle) * x2)) * np.exp(-r2 / (2.0 * width ** 2))
            f = GridField.from_array(grid, samples)
            u = self.resolvent.apply_R(f)
            for col, p in enumerate(p_values):
                ratios[i, col] = self.fields.lp_norm(u, p) / self.fields.lp_norm(f, p / (p - 1.0))

        rows, growth = [], {}
        sizes = sorted(set(family_sizes))
        for col, p in enumerate(p_values):
            for size in family_sizes:
                worst = float(np.max(ratios[:size, col]))
                rows.append(BoundednessRow(p=float(p), family_size=int(size), worst_ratio=worst))
                logger.info("boundedness row", p=p, family_size=size, worst_ratio=worst)
            if len(sizes) > 1:
                growth[float(p)] = float(np.max(ratios[:sizes[-1], col]) / np.max(ratios[:sizes[-2], col]))
            else:
                growth[float(p)] = 1.0
        stable = all(g <= self.STABLE_GROWTH for g in growth.values())
        if not stable:
            logger.warning("boundedness constant not settled", growth=growth, tolerance=self.STABLE_GROWTH)
        return BoundednessScan(rows=rows, growth=growth, stable=stable)

    def quadratic_form_vanishing(self, decomp: KernelDecomposition, dilations: Sequence[float],
                                 p: float) -> VanishingScan:
        """
        Spreading L^{p'}-normalized bumps v_s = s^{-2/p'} g(x/s): ball concentration
        and the Re Φ₁ / Re Φ₂ quadratic forms decay together.
        """
        if p < 6:
            raise DomainError("the vanishing experiment needs p >= 6", p=p)
        p_dual = p / (p - 1.0)
        grid = decomp.grid
        x1, x2 = grid.mesh()
        r2 = x1 * x1 + x2 * x2
        phi1 = decomp.phi1.with_samples(decomp.phi1.samples.real)
        phi2 = decomp.phi2.with_samples(decomp.phi2.samples.real)
        rows = []
        for s in dilations:
            if s <= 0:
                raise DomainError("dilation must be positive", s=s)
            v = GridField.from_array(grid, s ** (-2.0 / p_dual) * np.exp(-r2 / (s * s)))
            density = v.with_samples(np.abs(v.samples) ** p_dual)
            concentration = float(np.max(self.fields.ball_integrals(density, 1.0).samples.real))
            form1 = self.fields.real_inner(v.samples, self.fields.convolve(v, phi1).samples, grid.h)
            form2 = self.fields.real_inner(v.samples, self.fields.convolve(v, phi2).samples, grid.h)
            rows.append(VanishingRow(dilation=float(s), concentration=concentration,
                                     phi1_form=form1, phi2_form=form2))
            logger.info("vanishing row", dilation=s, concentration=concentration)
        return VanishingScan(p=p, rows=rows)


# --- Create Singleton Instance ---
estimates_service = EstimatesService(resolvent=resolvent_service, fields=field_service)
