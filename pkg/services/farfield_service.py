import math
from typing import List, Sequence, Tuple

import numpy as np
import structlog

from modals.farfield import (
    AnnulusError, CesaroRow, DecayFit, FarFieldComparison, FarFieldTrace, SectorComparison, WaveFit,
)
from modals.field import GridField
from modals.variational import Coefficient
from services.errors import DomainError, GridMismatchError
from services.field_service import FieldService, field_service

logger = structlog.get_logger(__name__)

FARFIELD_AMPLITUDE = math.sqrt(0.5 * math.pi)


def wrap_phase(angle: np.ndarray) -> np.ndarray:
    """Map angles to (-π, π]."""
    return -(np.mod(-np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi)


class FarFieldService:
    """
    Circle traces f̂(cos θ, sin θ) by direct quadrature and the leading-order far
    field u(x) ≈ √(π/2)|x|^{-1/2} Re[e^{i|x|+iπ/4} f̂(x/|x|)].
    """
    THETA_COUNT = 256
    INNER_CUTOFF = 1.0
    MIN_FIT_RADIUS = 5.0

    def __init__(self, fields: FieldService):
        self.fields = fields

    def hat_on_circle(self, f: GridField, n_theta: int = THETA_COUNT) -> FarFieldTrace:
        """
        (2π)^{-1} h² Σ f(x) e^{-i(x - c)·ξ} at ξ = (cos θ_k, sin θ_k), θ_k = 2πk/N, with c
        the grid centre; traces and predictions share that centre.
        """
        theta = 2.0 * math.pi * np.arange(n_theta) / n_theta
        grid = f.grid
        a = np.exp(-1j * np.outer(np.cos(theta), grid.axis(0) - grid.center[0]))
        b = np.exp(-1j * np.outer(np.sin(theta), grid.axis(1) - grid.center[1]))
        values = np.sum((b @ f.samples) * a, axis=1) * (grid.h ** 2 / (2.0 * math.pi))
        return FarFieldTrace(angles=theta, values=values)

    def _trace_at(self, trace: FarFieldTrace, angle: np.ndarray) -> np.ndarray:
        n = trace.values.shape[0]
        pos = np.mod(angle, 2.0 * math.pi) / (2.0 * math.pi / n)
        lo = np.floor(pos).astype(int) % n
        frac = pos - np.floor(pos)
        return trace.values[lo] * (1.0 - frac) + trace.values[(lo + 1) % n] * frac

    def outgoing_wave(self, trace: FarFieldTrace, x1: np.ndarray, x2: np.ndarray,
                      center: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
        """√(π/2) r^{-1/2} e^{ir+iπ/4} f̂(θ) with (r, θ) polar about `center`."""
        x1 = np.asarray(x1, dtype=float) - center[0]
        x2 = np.asarray(x2, dtype=float) - center[1]
        r = np.hypot(x1, x2)
        if np.any(r == 0.0):
            raise DomainError("the far-field prediction is undefined at x = 0")
        values = self._trace_at(trace, np.arctan2(x2, x1))
        return FARFIELD_AMPLITUDE * r ** -0.5 * np.exp(1j * (r + 0.25 * math.pi)) * values

    def predict_farfield(self, trace: FarFieldTrace, x1, x2, center: Tuple[float, float] = (0.0, 0.0)):
        """Real far-field value(s) at x; linear in the trace."""
        out = self.outgoing_wave(trace, x1, x2, center).real
        return float(out) if out.ndim == 0 else out

    def _prediction_for(self, u: GridField, trace: FarFieldTrace, mask: np.ndarray) -> np.ndarray:
        x1, x2 = u.grid.mesh()
        wave = self.outgoing_wave(trace, x1[mask], x2[mask], u.grid.center)
        return wave.real if u.is_real(tol=1e-12) else wave

    def annulus_error(self, u: GridField, trace: FarFieldTrace, r_in: float, r_out: float) -> AnnulusError:
        """
        Sup and RMS of |x|^{1/2}|u - prediction| on r_in <= |x| <= r_out. Real u is
        compared with the real prediction, complex u with the outgoing wave.
        """
        if r_out > 0.25 * u.grid.side * (1 + 1e-12):
            logger.warning("annulus extends past L/4", r_out=r_out, quarter=0.25 * u.grid.side)
        r = u.grid.radius()
        mask = (r >= max(r_in, 1e-300)) & (r <= r_out)
        if not np.any(mask):
            raise DomainError("empty annulus", r_in=r_in, r_out=r_out)
        scaled = np.sqrt(r[mask]) * np.abs(u.samples[mask] - self._prediction_for(u, trace, mask))
        return AnnulusError(r_in=r_in, r_out=r_out, sup_error=float(np.max(scaled)),
                            l2_error=float(np.sqrt(np.mean(scaled ** 2))))

    def cesaro_error(self, u: GridField, trace: FarFieldTrace, radii: Sequence[float],
                     inner: float = INNER_CUTOFF) -> List[CesaroRow]:
        """(1/R)∫_{inner<=|x|<=R} |u - prediction|² for each R."""
        r = u.grid.radius()
        rows = []
        for radius in radii:
            if radius <= inner:
                raise DomainError("Cesàro radius must exceed the inner cutoff", radius=radius, inner=inner)
            mask = (r >= inner) & (r <= radius)
            diff = u.samples[mask] - self._prediction_for(u, trace, mask)
            total = self.fields.real_inner(np.abs(diff) ** 2, np.ones(diff.shape), u.grid.h)
            rows.append(CesaroRow(radius=float(radius), error=total / radius))
        return rows

    def decay_fit(self, u: GridField, r_range: Tuple[float, float]) -> DecayFit:
        """Annulus-max envelope fit max|u| ≈ A r^s over the range (r1 >= 5)."""
        r1, r2 = r_range
        if r1 < self.MIN_FIT_RADIUS:
            raise DomainError(f"decay fit needs r1 >= {self.MIN_FIT_RADIUS}", r1=r1)
        if r2 > 0.5 * u.grid.side:
            raise DomainError("decay fit range leaves the grid", r2=r2, half_side=0.5 * u.grid.side)
        exponent, amplitude, residual = self.fields.envelope_decay(u, r1, r2)
        return DecayFit(exponent=exponent, amplitude=amplitude, fit_range=(r1, r2), residual=residual)

    def fit_annulus_wave(self, u: GridField, r_in: float, r_out: float, theta: float,
                         half_width: float = math.pi / 16.0) -> WaveFit:
        """Least squares u√r ≈ a cos r + b sin r in the sector |angle - θ| <= half_width."""
        x1, x2 = u.grid.mesh()
        c1, c2 = u.grid.center
        r = np.hypot(x1 - c1, x2 - c2)
        angle = np.arctan2(x2 - c2, x1 - c1)
        mask = (r >= r_in) & (r <= r_out) & (np.abs(wrap_phase(angle - theta)) <= half_width)
        if np.count_nonzero(mask) < 3:
            raise DomainError("sector holds fewer than three samples", r_in=r_in, r_out=r_out, theta=theta)
        rr = r[mask]
        data = u.samples.real[mask] * np.sqrt(rr)
        basis = np.column_stack([np.cos(rr), np.sin(rr)])
        (a, b), *_ = np.linalg.lstsq(basis, data, rcond=None)
        fitted = basis @ np.array([a, b])
        scale = float(np.linalg.norm(data))
        residual = float(np.linalg.norm(data - fitted)) / scale if scale > 0 else 0.0
        return WaveFit(amplitude=float(math.hypot(a, b)), phase=float(math.atan2(-b, a)), residual=residual)

    def compare_farfield_routes(self, u: GridField, Q: Coefficient, p: float, r_in: float, r_out: float,
                                sectors: int = 8, n_theta: int = THETA_COUNT) -> FarFieldComparison:
        """
        Trace of Q|u|^{p-2}u against sector fits of u: predicted amplitude √(π/2)|𝔣(θ)|
        and phase π/4 + arg 𝔣(θ).
        """
        if not Q.samples.grid.same_as(u.grid):
            raise GridMismatchError("Q and u must share a grid")
        w = u.samples.real
        trace = self.hat_on_circle(u.with_samples(Q.values * np.abs(w) ** (p - 2.0) * w), n_theta)
        results, amp_defect, phase_defect = [], 0.0, 0.0
        for s in range(sectors):
            angle = 2.0 * math.pi * s / sectors
            fit = self.fit_annulus_wave(u, r_in, r_out, angle, half_width=math.pi / (2.0 * sectors))
            value = complex(self._trace_at(trace, np.array([angle]))[0])
            amplitude = FARFIELD_AMPLITUDE * abs(value)
            phase = 0.25 * math.pi + math.atan2(value.imag, value.real)
            amp_defect = max(amp_defect, abs(fit.amplitude - amplitude) / amplitude)
            phase_defect = max(phase_defect, abs(float(wrap_phase(fit.phase - phase))))
            results.append(SectorComparison(angle=angle, fitted=fit, predicted_amplitude=amplitude,
                                            predicted_phase=float(wrap_phase(phase))))
        logger.info("far-field routes compared", amplitude_defect=amp_defect, phase_defect=phase_defect)
        return FarFieldComparison(amplitude_defect=amp_defect, phase_defect=phase_defect, sectors=results)


# --- Create Singleton Instance ---
farfield_service = FarFieldService(fields=field_service)
