import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from modals.field import GridField
from modals.radial import AsymptoticMatch, RadialProfile, ShootingResult
from services.errors import DomainError, SolverFailure
from services.specfun_service import SpecialFunctionService, specfun_service

logger = structlog.get_logger(__name__)

RadialQ = Callable[[np.ndarray], np.ndarray]


class RadialOracleService:
    """
    Shooting oracle for radial solutions of u'' + u'/r + u + Q(r)|u|^{p-2}u = 0,
    u(0) = a, u'(0) = 0. A solution of the integral equation is the shot whose far
    field A cos(r + ϑ)/√r is phase locked at ϑ ≡ π/4 (mod π).
    """
    TAYLOR_RADIUS = 1e-3
    SAMPLE_STEP = 0.01
    RTOL = 1e-10
    ATOL = 1e-12
    BLOWUP = 1e6
    R_MAX = 200.0
    SCAN_POINTS = 24
    MIN_WINDOW = 4.0 * math.pi

    def __init__(self, specfun: SpecialFunctionService):
        self.specfun = specfun

    def _j0(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        positive = r > 0
        out[positive] = self.specfun.eval_hankel0(r[positive]).real
        return out

    def integrate_radial(self, a: float, q_profile: RadialQ, p: float, r_max: float = R_MAX,
                         step: float = SAMPLE_STEP, rtol: float = RTOL) -> RadialProfile:
        """DOP853 from the Taylor start at r = 1e-3, sampled on a uniform grid from r = 0."""
        if a == 0:
            raise DomainError("shooting amplitude must be nonzero")
        q0 = float(q_profile(np.array([0.0]))[0])
        source = a + q0 * abs(a) ** (p - 2.0) * a
        r0 = self.TAYLOR_RADIUS
        y0 = [a - 0.25 * source * r0 * r0, -0.5 * source * r0]

        def rhs(r, y):
            u, du = y
            q = float(q_profile(np.array([r]))[0])
            return [du, -du / r - u - q * abs(u) ** (p - 2.0) * u]

        def blowup(r, y):
            return self.BLOWUP - abs(y[0])
        blowup.terminal = True

        r = np.arange(0.0, r_max + 0.5 * step, step)
        sol = solve_ivp(rhs, (r0, r[-1]), y0, method="DOP853", t_eval=r[1:], events=blowup,
                        rtol=rtol, atol=self.ATOL * max(1.0, abs(a)))
        u = np.full(r.shape, np.nan)
        du = np.full(r.shape, np.nan)
        u[0], du[0] = a, 0.0
        count = sol.t.shape[0]
        u[1:1 + count] = sol.y[0]
        du[1:1 + count] = sol.y[1]
        blew_up = count < r.shape[0] - 1
        if blew_up:
            logger.warning("radial shot blew up", a=a, radius=float(sol.t[-1]) if count else r0)
        return RadialProfile(r=r, u=u, du=du, amplitude=a, blew_up=blew_up)

    def match_asymptotics(self, profile: RadialProfile, window: Optional[Tuple[float, float]] = None,
                          hankel_correction: bool = False) -> AsymptoticMatch:
        """
        Least squares of u on {cos r/√r, sin r/√r} over the window; with
        hankel_correction the basis carries the next two terms of the Hankel expansion.
        """
        if window is None:
            window = (0.75 * profile.r_max, profile.r_max)
        lo, hi = window
        if lo < 0.5 * profile.r_max * (1 - 1e-12) or hi > profile.r_max * (1 + 1e-12) or hi - lo < self.MIN_WINDOW:
            raise DomainError("matching window must lie in [R_max/2, R_max] and span two wavelengths",
                              window=window, r_max=profile.r_max)
        mask = (profile.r >= lo) & (profile.r <= hi)
        r, u = profile.r[mask], profile.u[mask]
        if not np.all(np.isfinite(u)):
            raise DomainError("profile is not finite on the matching window")
        wave = np.exp(1j * r)
        if hankel_correction:
            wave = wave * (1.0 - 1j / (8.0 * r) - 9.0 / (128.0 * r * r))
        basis = np.column_stack([wave.real, wave.imag]) / np.sqrt(r)[:, None]
        (a, b), *_ = np.linalg.lstsq(basis, u, rcond=None)
        scale = float(np.linalg.norm(u))
        residual = float(np.linalg.norm(u - basis @ np.array([a, b]))) / scale if scale > 0 else 0.0
        amplitude = math.hypot(a, b)
        lock = (a + b) / math.sqrt(2.0 * (a * a + b * b)) if amplitude > 0 else 0.0
        return AsymptoticMatch(amplitude=amplitude, phase=math.atan2(-b, a), residual=residual,
                               lock=lock, window=(lo, hi))

    def farfield_coefficient(self, profile: RadialProfile, q_profile: RadialQ, p: float) -> float:
        """𝔣(1) = ∫₀^∞ J0(r) Q(r)|u|^{p-2}u r dr (Simpson on the profile samples)."""
        r, u = profile.r, profile.u
        finite = np.isfinite(u)
        r, u = r[finite], u[finite]
        integrand = self._j0(r) * q_profile(r) * np.abs(u) ** (p - 2.0) * u * r
        return float(simpson(integrand, x=r))

    @staticmethod
    def phase_defect(phase: float) -> float:
        """Distance from ϑ to π/4 modulo π."""
        d = math.fmod(phase - 0.25 * math.pi, math.pi)
        d = d + math.pi if d < 0 else d
        return min(d, math.pi - d)

    def _window(self, r_max: float) -> Tuple[float, float]:
        return (0.75 * r_max, r_max)

    def _lock(self, a: float, q_profile: RadialQ, p: float, r_max: float) -> Tuple[float, float]:
        profile = self.integrate_radial(a, q_profile, p, r_max)
        if profile.blew_up:
            return float("nan"), float("nan")
        match = self.match_asymptotics(profile, self._window(r_max), hankel_correction=True)
        return match.phase, match.lock

    def scan_phase(self, q_profile: RadialQ, p: float, a_values: Sequence[float],
                   r_max: float = R_MAX) -> List[Tuple[float, float, float]]:
        """(a, ϑ(a), lock(a)) rows; blown-up shots give NaN entries."""
        rows = []
        for a in a_values:
            phase, lock = self._lock(float(a), q_profile, p, r_max)
            rows.append((float(a), phase, lock))
            logger.debug("phase scan", a=a, phase=phase, lock=lock)
        return rows

    def shoot_solve(self, q_profile: RadialQ, p: float, a_bracket: Tuple[float, float] = (0.2, 3.0),
                    r_max: float = R_MAX, scan_points: int = SCAN_POINTS) -> ShootingResult:
        """First sign change of the lock function in the bracket, refined with brentq."""
        lo, hi = a_bracket
        if not lo < hi:
            raise DomainError("amplitude bracket must be increasing", bracket=a_bracket)
        scan = self.scan_phase(q_profile, p, np.linspace(lo, hi, scan_points), r_max)
        bracket = None
        for (a0, _, l0), (a1, _, l1) in zip(scan[:-1], scan[1:]):
            if np.isfinite(l0) and np.isfinite(l1) and l0 * l1 <= 0.0:
                bracket = (a0, a1)
                break
        if bracket is None:
            raise SolverFailure("phase lock has no sign change in the amplitude bracket",
                                report=[{"a": a, "phase": ph, "lock": lk} for a, ph, lk in scan])

        root, info = brentq(lambda a: self._lock(a, q_profile, p, r_max)[1], *bracket,
                            xtol=1e-13, rtol=4 * np.finfo(float).eps, full_output=True)
        profile = self.integrate_radial(root, q_profile, p, r_max)
        match = self.match_asymptotics(profile, self._window(r_max), hankel_correction=True)
        coefficient = self.farfield_coefficient(profile, q_profile, p)
        predicted = math.sqrt(0.5 * math.pi) * coefficient
        signed = match.amplitude if math.cos(match.phase - 0.25 * math.pi) >= 0 else -match.amplitude
        amplitude_defect = abs(signed - predicted) / abs(predicted) if predicted != 0 else float("inf")
        result = ShootingResult(
            amplitude_at_origin=float(root), far_amplitude=signed, far_phase=match.phase,
            fit_residual=match.residual, phase_defect=self.phase_defect(match.phase),
            amplitude_defect=amplitude_defect, farfield_coefficient=coefficient, p=p, r_max=r_max,
            iterations=int(info.function_calls), scan=scan,
        )
        logger.info("radial root", a=root, phase_defect=result.phase_defect, amplitude_defect=amplitude_defect)
        return result

    def compare_with_grid(self, profile: RadialProfile, u: GridField, r_limit: float = 20.0) -> float:
        """
        sup over |x - center| <= r_limit of |u_grid - u_oracle| / sup |u_oracle|. A
        blown-up profile is compared on its finite part only.
        """
        valid = profile.r.size
        if profile.blew_up:
            bad = ~(np.isfinite(profile.u) & np.isfinite(profile.du))
            valid = int(np.argmax(bad)) if np.any(bad) else profile.r.size
        if valid < 2 or r_limit > profile.r[valid - 1]:
            raise DomainError("comparison radius exceeds the oracle range", r_limit=r_limit,
                              finite_range=float(profile.r[max(valid - 1, 0)]), blew_up=profile.blew_up)
        r = u.grid.radius()
        mask = r <= r_limit
        spline = CubicSpline(profile.r[:valid], profile.u[:valid])
        oracle = spline(r[mask])
        scale = float(np.max(np.abs(profile.u[:valid][profile.r[:valid] <= r_limit])))
        return float(np.max(np.abs(u.samples.real[mask] - oracle))) / scale


# --- Create Singleton Instance ---
radial_service = RadialOracleService(specfun=specfun_service)
