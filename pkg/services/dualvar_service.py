import math
from typing import Callable, List, Optional, Tuple

import numpy as np
import structlog
from scipy.interpolate import CubicSpline
from scipy.linalg import eigvalsh

from modals.field import Grid, GridField
from modals.variational import (
    Coefficient, CoefficientClass, Concentration, DualState, GramMatrix, SolveReport,
    SolveStatus, SourcePatch, SubspaceConstruction,
)
from services.coefficient_service import CoefficientService, coefficient_service
from services.errors import DomainError, ResolutionError
from services.field_service import FieldService, field_service
from services.resolvent_service import ResolventService, resolvent_service
from services.specfun_service import SpecialFunctionService, specfun_service

logger = structlog.get_logger(__name__)

# A recentering hook gets the current iterate and returns the (possibly shifted)
# iterate plus the concentration it measured; None signals a vanishing sequence.
Recenter = Callable[[DualState], Tuple[DualState, Optional[Concentration]]]


class DualVariationalService:
    """
    The dual functional J(v) = (1/p')‖v‖_{p'}^{p'} - ½∫vKv with K = Q^{1/p}**R**Q^{1/p},
    and the solvers built on it: damped fixed-point iteration on u, normalized power
    iteration on v, the positive subspace W_m and the concentration detector.
    """
    DAMPING = 0.5
    MIN_DAMPING = 1.0 / 64.0
    DIVERGENCE_FACTOR = 10.0
    DIVERGENCE_WINDOW = 50
    OSCILLATION_WINDOW = 50
    COLLAPSE_FRACTION = 1e-12
    VANISHING_FRACTION = 1e-6
    CONCENTRATION_RADIUS = 5.0
    RECENTER_BLOCK = 20
    RECOVERY_STREAK = 10
    DENSITY_FRACTION = 1e-8
    RESOLUTION_FLOOR = 1e-6
    SHRINK_FACTOR = 0.5
    PATCH_POINTS = 32
    PATCH_CELLS_PER_RADIUS = 12
    TIE_TOLERANCE = 1e-9
    SOURCE_REFINEMENT = 4
    SOURCE_FLOOR = 1e-14
    SOURCE_MARGIN = 8

    def __init__(self, resolvent: ResolventService, fields: FieldService,
                 specfun: SpecialFunctionService, coefficients: CoefficientService):
        self.resolvent = resolvent
        self.fields = fields
        self.specfun = specfun
        self.coefficients = coefficients

    # --- functional ---

    def apply_K(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice") -> GridField:
        return self.resolvent.apply_K(state.v, Q, state.p, origin_rule)

    def eval_J(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice") -> float:
        """J(v) on the grid; exactly even in v."""
        pd = state.p_dual
        kv = self.apply_K(state, Q, origin_rule)
        power = self.fields.lp_norm(state.v, pd) ** pd
        form = self.fields.real_inner(state.samples, kv.samples, state.v.grid.h)
        return power / pd - 0.5 * form

    def eval_gradJ(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice") -> GridField:
        """L² representative of J'(v): |v|^{p'-2}v - Kv."""
        v = state.samples
        kv = self.apply_K(state, Q, origin_rule)
        return state.v.with_samples(np.sign(v) * np.abs(v) ** (state.p_dual - 1.0) - kv.samples.real)

    def critical_point_from_u(self, u: GridField, Q: Coefficient, p: float) -> DualState:
        """v = Q^{1/p'}|u|^{p-2}u, the dual variable of a solution u = **R**(Q|u|^{p-2}u)."""
        if not u.is_real(tol=1e-12):
            raise DomainError("critical_point_from_u needs a real u")
        w = u.samples.real
        v = Q.values ** ((p - 1.0) / p) * np.abs(w) ** (p - 2.0) * w
        return DualState(v=u.with_samples(v), p=p)

    def u_from_v(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice") -> GridField:
        """u = **R**(Q^{1/p} v)."""
        root = Q.root(state.p)
        return self.resolvent.apply_R(state.v.with_samples(root * state.samples), origin_rule)

    # --- residuals ---

    def _nonlinearity(self, u: np.ndarray, Q: Coefficient, p: float) -> np.ndarray:
        return Q.values * np.abs(u) ** (p - 2.0) * u

    def fixed_point_residual(self, u: GridField, Q: Coefficient, p: float, origin_rule: str = "lattice",
                             refine: int = SOURCE_REFINEMENT) -> float:
        """‖u - **R**(Q|u|^{p-2}u)‖_p / ‖u‖_p (0 for u = 0)."""
        norm = self.fields.lp_norm(u, p)
        if norm == 0.0:
            return 0.0
        _, tu, _ = self.source_map(u.samples.real, Q, p, origin_rule, self.source_patch(Q, refine))
        return self.fields.lp_norm(u.with_samples(u.samples.real - tu), p) / norm

    def euler_defect(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice") -> float:
        """|‖v‖^{p'} - ∫vKv| / ‖v‖^{p'}."""
        pd = state.p_dual
        power = self.fields.lp_norm(state.v, pd) ** pd
        if power == 0.0:
            return 0.0
        form = self.fields.real_inner(state.samples, self.apply_K(state, Q, origin_rule).samples, state.v.grid.h)
        return abs(power - form) / power

    # --- refined nonlinear source ---

    def source_patch(self, Q: Coefficient, refine: int = SOURCE_REFINEMENT) -> Optional[SourcePatch]:
        """
        Window of the coarse grid holding {Q > SOURCE_FLOOR·max Q} plus SOURCE_MARGIN
        cells, refined `refine` times, with Q re-sampled from its closure. None when
        refinement is off or the window would not be smaller than half the grid.
        """
        if refine <= 1:
            return None
        grid = Q.samples.grid
        q = Q.values
        top = float(np.max(q))
        if top == 0.0:
            return None
        rows, cols = np.nonzero(q > self.SOURCE_FLOOR * top)
        extent = max(rows.max() - rows.min(), cols.max() - cols.min()) + 1 + 2 * self.SOURCE_MARGIN
        size = max(16, 1 << int(math.ceil(math.log2(extent))))
        starts = []
        for idx in (rows, cols):
            start = (int(idx.min()) + int(idx.max()) + 1) // 2 - size // 2
            starts.append(start)
        if size > grid.n // 2 or min(starts) < 0 or max(starts) + size + 1 > grid.n:
            logger.debug("source refinement skipped", window=size, n=grid.n)
            return None
        r0, c0 = starts
        center = (float(grid.axis(0)[c0 + size // 2]), float(grid.axis(1)[r0 + size // 2]))
        fine = Grid(n=size * refine, h=grid.h / refine, center=center)
        x1, x2 = fine.mesh()
        return SourcePatch(rows=(r0, r0 + size), cols=(c0, c0 + size), refine=refine, fine=fine,
                           q=self.coefficients.evaluate(Q.closure, x1, x2))

    def _refined_source_map(self, w: np.ndarray, grid: Grid, patch: SourcePatch, p: float,
                            origin_rule: str) -> Tuple[np.ndarray, float]:
        """
        **R**(Q|w|^{p-2}w) on the coarse window, with w carried onto the fine grid by
        tensor-product cubic splines and the convolution done there; also returns ∫Q|w|^p.
        """
        (r0, r1), (c0, c1) = patch.rows, patch.cols
        block = w[r0:r1 + 1, c0:c1 + 1]
        across = CubicSpline(grid.axis(0)[c0:c1 + 1], block, axis=1)(patch.fine.axis(0))
        w_fine = CubicSpline(grid.axis(1)[r0:r1 + 1], across, axis=0)(patch.fine.axis(1))
        nl_fine = patch.q * np.abs(w_fine) ** (p - 2.0) * w_fine
        tw = self.resolvent.apply_R(GridField.from_array(patch.fine, nl_fine), origin_rule).samples.real
        power = self.fields.real_inner(nl_fine, w_fine, patch.fine.h)
        return tw[::patch.refine, ::patch.refine], power

    def source_map(self, w: np.ndarray, Q: Coefficient, p: float, origin_rule: str = "lattice",
                   patch: Optional[SourcePatch] = None) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        (N(w), **R**N(w), ∫Q|w|^p) for N(w) = Q|w|^{p-2}w. With a patch, the window
        samples of **R**N(w) and the power come from the refined grid.
        """
        grid = Q.samples.grid
        nl = self._nonlinearity(w, Q, p)
        tw = np.array(self.resolvent.apply_R(GridField.from_array(grid, nl), origin_rule).samples.real)
        if patch is None:
            return nl, tw, self.fields.real_inner(nl, w, grid.h)
        window, power = self._refined_source_map(w, grid, patch, p, origin_rule)
        tw[patch.rows[0]:patch.rows[1], patch.cols[0]:patch.cols[1]] = window
        return nl, tw, power

    # --- fixed point on u ---

    def fixed_point_solve(self, u0: GridField, Q: Coefficient, p: float, damping: float = DAMPING,
                          tol: float = 1e-6, max_iter: int = 400,
                          origin_rule: str = "lattice",
                          refine: int = SOURCE_REFINEMENT) -> Tuple[GridField, SolveReport]:
        """
        Damped stabilized Picard iteration for u = **R**(Q|u|^{p-2}u).

        Each step rescales **R**N(u) by M^γ, M = ⟨N(u), u⟩/⟨N(u), **R**N(u)⟩ and
        γ = (p-1)/(p-2), which removes the scaling instability of the plain iteration
        and leaves fixed points unchanged (M = 1 there). The damping is halved
        whenever the residual increases.

        With refine > 1 the source near the support of Q is evaluated and convolved
        on a grid `refine` times finer (see source_patch); refine = 1 keeps the plain
        grid quadrature, the discretization the dual solvers use.
        """
        if not u0.is_real(tol=1e-12):
            raise DomainError("fixed_point_solve needs a real initial guess")
        if not 0.0 < damping <= 1.0:
            raise DomainError("damping must lie in (0, 1]", damping=damping)
        if not Q.samples.grid.same_as(u0.grid):
            raise DomainError("Q and u0 must share a grid")
        patch = self.source_patch(Q, refine)
        backend = {"n": u0.grid.n, "h": u0.grid.h, "origin_rule": origin_rule,
                   "source_refinement": patch.refine if patch is not None else 1}
        h = u0.grid.h
        gamma = (p - 1.0) / (p - 2.0)

        def transform(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
            return self.source_map(w, Q, p, origin_rule, patch)

        u = u0.samples.real.copy()
        start_norm = self.fields.lp_norm(u0, p)
        if start_norm == 0.0:
            return u0, SolveReport(status=SolveStatus.TRIVIAL, method="fixed-point", p=p, tolerance=tol,
                                   final_residual=0.0, backend=backend, message="zero initial guess")

        _, tu, _ = transform(u)
        t_norm = self.fields.lp_norm(u0.with_samples(tu), p)
        if t_norm > 0.0:
            u = u * (start_norm / t_norm) ** (1.0 / (p - 2.0))
        scale_norm = self.fields.lp_norm(u0.with_samples(u), p)

        theta = damping
        history: List[float] = []
        status = SolveStatus.MAX_ITER
        message = ""
        iterations = 0
        for iterations in range(1, max_iter + 1):
            nl, tu, power = transform(u)
            u_norm = self.fields.lp_norm(u0.with_samples(u), p)
            if u_norm <= self.COLLAPSE_FRACTION * scale_norm:
                status, message = SolveStatus.TRIVIAL, "iterate collapsed to zero"
                u = np.zeros_like(u)
                history.append(0.0)
                break
            residual = self.fields.lp_norm(u0.with_samples(u - tu), p) / u_norm
            history.append(residual)
            if residual <= tol:
                status = SolveStatus.CONVERGED
                break
            if len(history) > 1 and residual > history[-2]:
                theta = max(theta * 0.5, self.MIN_DAMPING)
            if len(history) > self.DIVERGENCE_WINDOW and residual > self.DIVERGENCE_FACTOR * history[-1 - self.DIVERGENCE_WINDOW]:
                status, message = SolveStatus.DIVERGED, "residual grew tenfold over the divergence window"
                break
            num = self.fields.real_inner(nl, u, h)
            den = self.fields.real_inner(nl, tu, h)
            m = num / den if den > 0.0 and num > 0.0 else 1.0
            u = (1.0 - theta) * u + theta * m ** gamma * tu
            if iterations % 10 == 0:
                logger.info("fixed-point", iteration=iterations, residual=residual, damping=theta)

        field = u0.with_samples(u)
        report = self._report(status, "fixed-point", p, tol, iterations, history, theta, backend, message)
        if status is SolveStatus.CONVERGED:
            pd = p / (p - 1.0)
            report = report.model_copy(update={
                "level": (1.0 / pd - 0.5) * power,
                "v_norm": power ** (1.0 / pd),
                "u_norm": self.fields.lp_norm(field, p),
            })
        logger.info("fixed-point finished", status=report.status.value, iterations=iterations,
                    residual=report.final_residual)
        return field, report

    def _report(self, status: SolveStatus, method: str, p: float, tol: float, iterations: int,
                history: List[float], theta: float, backend: dict, message: str,
                concentration: Optional[List[Concentration]] = None) -> SolveReport:
        return SolveReport(
            status=status, method=method, p=p, tolerance=tol, iterations=iterations,
            residual_history=history, final_residual=history[-1] if history else None,
            damping=theta, backend=backend, message=message, concentration=concentration or [],
        )

    # --- dual power iteration ---

    def _oscillating(self, norms: List[float]) -> bool:
        window = norms[-self.OSCILLATION_WINDOW:]
        if len(window) < self.OSCILLATION_WINDOW:
            return False
        steps = np.diff(window)
        flips = int(np.sum(np.sign(steps[1:]) != np.sign(steps[:-1])))
        spread = (max(window) - min(window)) / max(np.mean(window), 1e-300)
        return flips >= 0.8 * (len(steps) - 1) and spread > 1e-2

    def dual_residual(self, state: DualState, Q: Coefficient, origin_rule: str = "lattice",
                      kv: Optional[np.ndarray] = None) -> float:
        """‖v - |Kv|^{p-2}Kv‖_{p'} / ‖v‖_{p'} (0 for v = 0)."""
        v_norm = self.fields.lp_norm(state.v, state.p_dual)
        if v_norm == 0.0:
            return 0.0
        if kv is None:
            kv = self.apply_K(state, Q, origin_rule).samples.real
        s = np.abs(kv) ** (state.p - 2.0) * kv
        return self.fields.lp_norm(state.v.with_samples(state.samples - s), state.p_dual) / v_norm

    def _run_dual(self, v0: DualState, Q: Coefficient, tol: float, max_iter: int, damping: float,
                  origin_rule: str, method: str, recenter: Optional[Recenter] = None,
                  block: int = RECENTER_BLOCK,
                  project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  ) -> Tuple[DualState, Optional[GridField], SolveReport]:
        p, pd = v0.p, v0.p_dual
        h = v0.v.grid.h
        gamma = (p - 1.0) / (2.0 - pd)
        backend = {"n": v0.v.grid.n, "h": h, "origin_rule": origin_rule, "mirror_projection": project is not None}
        if not Q.samples.grid.same_as(v0.v.grid):
            raise DomainError("Q and v0 must share a grid")

        state = v0 if project is None else v0.with_samples(project(v0.samples))
        kv = self.apply_K(state, Q, origin_rule).samples.real
        form = self.fields.real_inner(state.samples, kv, h)
        if form <= 0.0:
            report = self._report(SolveStatus.NOT_POSITIVE, method, p, tol, 0, [], damping, backend,
                                  f"∫v0·Kv0 = {form:.3e} is not positive")
            return state, None, report

        theta = damping
        streak = 0
        history: List[float] = []
        norms: List[float] = []
        concentration: List[Concentration] = []
        status, message = SolveStatus.MAX_ITER, ""
        iterations = 0
        for iterations in range(1, max_iter + 1):
            v = state.samples
            s = np.abs(kv) ** (p - 2.0) * kv
            v_norm = self.fields.lp_norm(state.v, pd)
            residual = self.fields.lp_norm(state.v.with_samples(v - s), pd) / v_norm
            history.append(residual)
            norms.append(v_norm)
            if residual <= tol:
                status = SolveStatus.CONVERGED
                break
            if len(history) > 1 and residual > history[-2]:
                theta = max(theta * 0.5, self.MIN_DAMPING)
                streak = 0
            else:
                streak += 1
                if streak >= self.RECOVERY_STREAK and theta < damping:
                    theta = min(theta * 2.0, damping)
                    streak = 0
            if theta == self.MIN_DAMPING and self._oscillating(norms):
                status, message = SolveStatus.OSCILLATING, "‖v‖ oscillates at minimal damping"
                break
            form = self.fields.real_inner(v, kv, h)
            if form <= 0.0:
                status, message = SolveStatus.NOT_POSITIVE, "∫v·Kv lost positivity"
                break
            m = v_norm ** pd / form
            step = (1.0 - theta) * v + theta * m ** gamma * s
            state = state.with_samples(step if project is None else project(step))

            if recenter is not None and iterations % block == 0:
                state, found = recenter(state)
                if found is None:
                    status, message = SolveStatus.VANISHING, "concentration fell below the vanishing threshold"
                    break
                concentration.append(found)
            kv = self.apply_K(state, Q, origin_rule).samples.real
            if iterations % 10 == 0:
                logger.info(method, iteration=iterations, residual=residual, damping=theta)

        report = self._report(status, method, p, tol, iterations, history, theta, backend, message, concentration)
        u = None
        if status is SolveStatus.CONVERGED:
            power = self.fields.lp_norm(state.v, pd) ** pd
            u = self.u_from_v(state, Q, origin_rule)
            report = report.model_copy(update={
                "level": (1.0 / pd - 0.5) * power,
                "v_norm": power ** (1.0 / pd),
                "u_norm": self.fields.lp_norm(u, p),
                "euler_defect": self.euler_defect(state, Q, origin_rule),
            })
        logger.info(f"{method} finished", status=report.status.value, iterations=iterations,
                    residual=report.final_residual)
        return state, u, report

    def dual_power_iterate(self, v0: DualState, Q: Coefficient, tol: float = 1e-6, max_iter: int = 400,
                           damping: float = DAMPING,
                           origin_rule: str = "lattice") -> Tuple[DualState, Optional[GridField], SolveReport]:
        """
        Normalized iteration v <- M^γ |Kv|^{p-2}Kv, M = ‖v‖^{p'}/∫vKv, γ = (p-1)/(2-p').
        At convergence M = 1, which is the Euler identity ‖v‖^{p'} = ∫vKv.

        Returns:
            (v, u = **R**(Q^{1/p}v) or None when not converged, report)
        """
        if self.fields.lp_norm(v0.v, 2.0) == 0.0:
            raise DomainError("dual iteration needs a nonzero v0")
        return self._run_dual(v0, Q, tol, max_iter, damping, origin_rule, method="dual")

    # --- concentration and the periodic case ---

    def _argmax_lexicographic(self, values: np.ndarray, grid: Grid) -> Tuple[int, int]:
        """Index of the maximum; ties within TIE_TOLERANCE go to the smallest (x1, x2)."""
        top = float(np.max(values))
        rows, cols = np.nonzero(values >= top - self.TIE_TOLERANCE * abs(top))
        order = np.lexsort((rows, cols))
        return int(rows[order[0]]), int(cols[order[0]])

    def nonvanishing_detect(self, v: GridField, radius: float, p_dual: float) -> Concentration:
        """max over grid-centred balls of ∫_{B_R(y)}|v|^{p'} and its centre y."""
        density = v.with_samples(np.abs(v.samples) ** p_dual)
        balls = self.fields.ball_integrals(density, radius).samples.real
        row, col = self._argmax_lexicographic(balls, v.grid)
        x1, x2 = v.grid.axis(0)[col], v.grid.axis(1)[row]
        return Concentration(radius=radius, zeta=float(balls[row, col]), center=(float(x1), float(x2)))

    def lattice_recenter(self, state: DualState, period: Tuple[float, float] = (1.0, 1.0),
                         radius: float = CONCENTRATION_RADIUS) -> Tuple[DualState, Optional[Concentration]]:
        """Shift v by the period-lattice vector nearest to its concentration point."""
        grid = state.v.grid
        found = self.nonvanishing_detect(state.v, radius, state.p_dual)
        power = self.fields.lp_norm(state.v, state.p_dual) ** state.p_dual
        if found.zeta < self.VANISHING_FRACTION * power:
            logger.warning("vanishing sequence", zeta=found.zeta, norm_power=power)
            return state, None
        a1 = round((found.center[0] - grid.center[0]) / period[0]) * period[0]
        a2 = round((found.center[1] - grid.center[1]) / period[1]) * period[1]
        cells = (-int(round(a1 / grid.h)), -int(round(a2 / grid.h)))
        if cells != (0, 0):
            state = DualState(v=self.fields.shift_lattice(state.v, cells), p=state.p)
            logger.debug("recentred", shift=cells)
        return state, found

    def initial_bump(self, grid: Grid, width: float = 0.25, center: Optional[Tuple[float, float]] = None) -> GridField:
        c = center or grid.center
        return GridField.from_function(grid, lambda x1, x2: np.exp(-((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (2.0 * width ** 2)))

    def periodic_solve(self, Q: Coefficient, p: float, tol: float = 1e-5, max_iter: int = 400,
                       damping: float = DAMPING, v0: Optional[DualState] = None, block: int = RECENTER_BLOCK,
                       origin_rule: str = "lattice") -> Tuple[DualState, Optional[GridField], SolveReport]:
        """
        Dual iteration with a lattice recentering of the iterate after every block.

        Without a v0 the iteration starts from a bump at the grid centre; when Q is
        mirror symmetric about that centre, every iterate is projected onto the mirror
        symmetric fields, which removes the near-neutral translation directions of a
        lattice-periodic Q.
        """
        if Q.kind is not CoefficientClass.PERIODIC:
            raise DomainError("periodic_solve needs a periodic coefficient")
        if not p > 6.0:
            raise DomainError("periodic_solve needs p > 6", p=p)
        grid = Q.samples.grid
        project = None
        if v0 is None:
            v0 = DualState(v=self.initial_bump(grid, width=max(0.25, 2.0 * grid.h)), p=p)
            if self.fields.is_mirror_symmetric(Q.samples):
                project = self.fields.mirror_average
        return self._run_dual(v0, Q, tol, max_iter, damping, origin_rule, method="periodic",
                              recenter=lambda s: self.lattice_recenter(s, Q.period), block=block,
                              project=project)

    # --- positive subspace W_m ---

    def density_point(self, Q: Coefficient, radius: float) -> Tuple[float, float]:
        """
        Centre of a disc of the given radius holding the largest measure of {Q > 0}.
        Ties go to the larger ∫Q over the disc, then to the grid centre, then to the
        smallest (x1, x2).
        """
        grid = Q.samples.grid
        q = Q.values
        support = Q.samples.with_samples((q > self.DENSITY_FRACTION * np.max(q)).astype(float))
        measure = self.fields.ball_integrals(support, max(radius, grid.h)).samples.real
        mass = self.fields.ball_integrals(Q.samples, max(radius, grid.h)).samples.real
        top = float(np.max(measure))
        ok = measure >= top - self.TIE_TOLERANCE * top
        best_mass = float(np.max(mass[ok]))
        ok &= mass >= best_mass - self.TIE_TOLERANCE * abs(best_mass)
        rows, cols = np.nonzero(ok)
        x1, x2 = grid.axis(0)[cols], grid.axis(1)[rows]
        dist = np.hypot(x1 - grid.center[0], x2 - grid.center[1])
        pick = np.lexsort((x2, x1, np.round(dist / grid.h, 9)))[0]
        return float(x1[pick]), float(x2[pick])

    def _patch(self, center: Tuple[float, float], tau: float) -> Grid:
        return Grid(n=self.PATCH_POINTS, h=tau / self.PATCH_CELLS_PER_RADIUS, center=center)

    def _patch_bump(self, patch: Grid, tau: float) -> GridField:
        r2 = patch.radius() ** 2 / (tau * tau)
        return GridField.from_array(patch, np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0))

    def build_positive_subspace(self, Q: Coefficient, m: int, delta: float,
                                x0: Optional[Tuple[float, float]] = None) -> SubspaceConstruction:
        """
        m balls of radius τ = σ^m/2, σ = δ/(4√m), pairwise at least σ apart, inside
        B_δ(x0) ∩ {Q > 0}; δ is halved until Ψ*(σ^m) > (m-1)Ψ_*(σ).
        """
        if m < 1 or not 0.0 < delta < 1.0:
            raise DomainError("need m >= 1 and 0 < delta < 1", m=m, delta=delta)
        steps = 0
        while True:
            sigma = delta / (4.0 * math.sqrt(m))
            if sigma ** m < self.RESOLUTION_FLOOR:
                limit = max([k for k in range(1, m + 1) if (delta / (4.0 * math.sqrt(k))) ** k >= self.RESOLUTION_FLOOR],
                            default=0)
                raise ResolutionError(f"balls of diameter σ^m = {sigma ** m:.2e} are below the resolution floor",
                                      m=m, delta=delta, limiting_m=limit)
            inner = self.specfun.psi_upper(sigma ** m)
            outer = self.specfun.psi_lower(sigma)
            if inner > (m - 1) * outer:
                break
            delta *= self.SHRINK_FACTOR
            steps += 1
            logger.debug("shrinking delta", delta=delta, psi_inner=inner, psi_outer=outer)

        tau = 0.5 * sigma ** m
        if x0 is None:
            x0 = self.density_point(Q, delta)
        spacing = sigma + 2.0 * tau
        reach = int(math.ceil(delta / spacing))
        offsets = np.arange(-reach, reach + 1) * spacing
        c1, c2 = np.meshgrid(x0[0] + offsets, x0[1] + offsets, indexing="xy")
        c1, c2 = c1.ravel(), c2.ravel()
        dist = np.hypot(c1 - x0[0], c2 - x0[1])
        q = self.coefficients.evaluate(Q.closure, c1, c2)
        keep = (dist <= delta) & (q > self.DENSITY_FRACTION * float(np.max(Q.values)))
        c1, c2, dist = c1[keep], c2[keep], dist[keep]
        order = np.lexsort((c2, c1, dist))

        centers: List[Tuple[float, float]] = []
        for idx in order:
            point = (float(c1[idx]), float(c2[idx]))
            if all(math.hypot(point[0] - c[0], point[1] - c[1]) >= spacing * (1 - 1e-12) for c in centers):
                centers.append(point)
            if len(centers) == m:
                break
        if len(centers) < m:
            raise ResolutionError(f"found only {len(centers)} admissible centres in B_δ(x0)", m=m, delta=delta)

        bumps = [self._patch_bump(self._patch(c, tau), tau) for c in centers]
        construction = SubspaceConstruction(
            m=m, delta=delta, x0=x0, centers=centers, radii=[tau] * m, bumps=bumps,
            psi_star_inner=inner, psi_star_outer=outer, shrink_steps=steps,
        )
        logger.info("positive subspace built", m=m, delta=delta, sigma=sigma, tau=tau, shrink_steps=steps)
        return construction

    def gram_matrix(self, construction: SubspaceConstruction, Q: Coefficient, p: float,
                    origin_rule: str = "lattice") -> GramMatrix:
        """G_ij = ∫∫ w_i(x) Re Φ(x-y) w_j(y), w_i = Q^{1/p} z_i on the bump patches."""
        weights, coords, cells = [], [], []
        for bump in construction.bumps:
            x1, x2 = bump.grid.mesh()
            q = self.coefficients.evaluate(Q.closure, x1, x2)
            weights.append(q ** (1.0 / p) * bump.samples.real)
            coords.append((x1.ravel(), x2.ravel()))
            cells.append(bump.grid.h ** 2)

        m = construction.m
        g = np.zeros((m, m))
        masses = [float(np.sum(w) * a) for w, a in zip(weights, cells)]
        for i in range(m):
            patch = construction.bumps[i].grid
            w = construction.bumps[i].with_samples(weights[i])
            rw = self.resolvent.apply_R(w, origin_rule).samples.real
            g[i, i] = self.fields.real_inner(weights[i], rw, patch.h)
            for j in range(i):
                d = np.hypot(coords[i][0][:, None] - coords[j][0][None, :],
                             coords[i][1][:, None] - coords[j][1][None, :])
                kernel = self.specfun.eval_phi(d).real
                g[i, j] = g[j, i] = float(weights[i].ravel() @ kernel @ weights[j].ravel()) * cells[i] * cells[j]
        lam = float(eigvalsh(g)[0])
        bound = construction.psi_margin * min(masses) ** 2
        logger.info("gram matrix", m=m, min_eigenvalue=lam, lower_bound=bound)
        return GramMatrix(matrix=g, min_eigenvalue=lam, lower_bound=bound, masses=masses)

    # --- families and scaling ---

    def subspace_seed(self, construction: SubspaceConstruction, grid: Grid, p: float) -> DualState:
        """Alternating-sign bumps of radius max(τ, 2h) at the construction centres on `grid`."""
        radius = max(construction.tau, 2.0 * grid.h)
        x1, x2 = grid.mesh()
        v = np.zeros((grid.n, grid.n))
        for i, c in enumerate(construction.centers):
            r2 = ((x1 - c[0]) ** 2 + (x2 - c[1]) ** 2) / (radius * radius)
            v += (-1.0) ** i * np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
        return DualState(v=GridField.from_array(grid, v), p=p)

    def solution_family(self, Q: Coefficient, p: float, m_max: int, delta: float = 0.5, tol: float = 1e-6,
                        max_iter: int = 400, origin_rule: str = "lattice") -> List[SolveReport]:
        """One dual solve per W_m seed, m = 1..m_max; c-values reported without a distinctness claim."""
        reports = []
        for m in range(1, m_max + 1):
            construction = self.build_positive_subspace(Q, m, delta)
            seed = self.subspace_seed(construction, Q.samples.grid, p)
            _, _, report = self._run_dual(seed, Q, tol, max_iter, self.DAMPING, origin_rule, method=f"dual-m{m}")
            reports.append(report)
        return reports

    def rescale_wavenumber(self, u: GridField, k: float, p: float) -> GridField:
        """u_k(x) = k^{2/(p-2)} u(kx), a solution of -Δw - k²w = Q(k·)|w|^{p-2}w."""
        if k <= 0:
            raise DomainError("wavenumber must be positive", k=k)
        grid = Grid(n=u.grid.n, h=u.grid.h / k, center=(u.grid.center[0] / k, u.grid.center[1] / k))
        return GridField.from_array(grid, k ** (2.0 / (p - 2.0)) * u.samples, wavenumber=k)


# --- Create Singleton Instance ---
dualvar_service = DualVariationalService(
    resolvent=resolvent_service, fields=field_service, specfun=specfun_service, coefficients=coefficient_service,
)
