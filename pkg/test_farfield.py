import math

import numpy as np
import pytest

from modals.farfield import FarFieldTrace
from modals.field import Grid, GridField
from modals.variational import SolveStatus
from services.coefficient_service import CoefficientService
from services.dualvar_service import DualVariationalService
from services.errors import DomainError, GridMismatchError
from services.farfield_service import FARFIELD_AMPLITUDE, FarFieldService, wrap_phase
from services.field_service import FieldService
from services.resolvent_service import ResolventService
from services.specfun_service import SpecialFunctionService


@pytest.fixture(scope="module")
def farfield():
    return FarFieldService(fields=FieldService())


def _model_field(farfield, grid: Grid, trace: FarFieldTrace) -> GridField:
    """The real far-field prediction itself, set to 0 at the grid centre."""
    x1, x2 = grid.mesh()
    r = grid.radius()
    values = np.zeros_like(r)
    mask = r > 0
    values[mask] = farfield.predict_farfield(trace, x1[mask], x2[mask], grid.center)
    return GridField.from_array(grid, values)


# --- traces ---

def test_gaussian_trace(farfield, small_grid, gaussian):
    trace = farfield.hat_on_circle(gaussian(small_grid), n_theta=64)
    assert trace.values.shape == (64,)
    assert np.max(np.abs(trace.values - math.exp(-0.5))) < 1e-6
    assert np.max(np.abs(trace.values - trace.values[0])) < 1e-10


def test_real_source_has_conjugate_symmetric_trace(farfield, small_grid):
    f = GridField.from_function(small_grid, lambda x1, x2: np.exp(-0.5 * ((x1 - 1.5) ** 2 + (x2 + 0.5) ** 2)) * (1 + x1))
    trace = farfield.hat_on_circle(f, n_theta=32)
    assert trace.conjugate_symmetry_defect() < 1e-12
    assert np.max(np.abs(trace.values.imag)) > 1e-3


def test_offset_grid_trace(farfield):
    grid = Grid(n=64, h=2.0 * math.pi / 16.0, center=(3.0, -2.0))
    f = GridField.from_function(grid, lambda x1, x2: np.exp(-0.5 * ((x1 - 3.0) ** 2 + (x2 + 2.0) ** 2)))
    trace = farfield.hat_on_circle(f, n_theta=64)
    assert np.max(np.abs(trace.values - math.exp(-0.5))) < 1e-6
    assert np.max(np.abs(trace.values - trace.values[0])) < 1e-10


def test_trace_angles_are_checked():
    with pytest.raises(ValueError):
        FarFieldTrace(angles=np.linspace(0.0, 1.0, 4), values=np.ones(4, dtype=complex))


# --- prediction ---

def test_unit_trace_prediction(farfield):
    trace = FarFieldTrace.uniform(np.ones(16))
    r = np.array([1.0, 7.5, 40.0])
    expected = math.sqrt(0.5 * math.pi) * np.cos(r + 0.25 * math.pi) / np.sqrt(r)
    assert np.allclose(farfield.predict_farfield(trace, r, np.zeros(3)), expected, rtol=0, atol=1e-14)
    assert isinstance(farfield.predict_farfield(trace, 2.0, 0.0), float)
    assert FARFIELD_AMPLITUDE == pytest.approx(1.2533141373)


def test_prediction_rotates_with_trace_phase(farfield):
    alpha = 0.7
    trace = FarFieldTrace.uniform(np.ones(16)).scaled(np.exp(1j * alpha))
    r = np.linspace(3.0, 30.0, 7)
    expected = FARFIELD_AMPLITUDE * np.cos(r + 0.25 * math.pi + alpha) / np.sqrt(r)
    assert np.allclose(farfield.predict_farfield(trace, np.zeros(7), r), expected, rtol=0, atol=1e-14)


def test_prediction_is_undefined_at_origin(farfield):
    with pytest.raises(DomainError):
        farfield.predict_farfield(FarFieldTrace.uniform(np.ones(4)), 0.0, 0.0)


def test_prediction_matches_itself(farfield, small_grid):
    trace = FarFieldTrace.uniform(np.exp(1j * np.arange(32) / 5.0))
    u = _model_field(farfield, small_grid, trace)
    error = farfield.annulus_error(u, trace, 2.0, 6.0)
    assert error.sup_error < 1e-12
    assert error.l2_error < 1e-12
    rows = farfield.cesaro_error(u, trace, [2.0, 5.0])
    assert [row.radius for row in rows] == [2.0, 5.0]
    assert all(row.error < 1e-20 for row in rows)


def test_prediction_matches_itself_on_offset_grid(farfield):
    grid = Grid(n=64, h=2.0 * math.pi / 16.0, center=(3.0, -2.0))
    trace = FarFieldTrace.uniform(np.exp(1j * np.arange(32) / 5.0))
    u = _model_field(farfield, grid, trace)
    assert farfield.annulus_error(u, trace, 2.0, 6.0).sup_error < 1e-12
    assert all(row.error < 1e-20 for row in farfield.cesaro_error(u, trace, [2.0, 5.0]))
    # sectors are measured from the centre too, so a uniform wave fits exactly
    wave = _model_field(farfield, grid, FarFieldTrace.uniform(np.ones(16)))
    fit = farfield.fit_annulus_wave(wave, 2.0, 10.0, 0.0)
    assert fit.amplitude == pytest.approx(FARFIELD_AMPLITUDE, rel=1e-10)
    assert fit.phase == pytest.approx(0.25 * math.pi, abs=1e-10)


def test_cesaro_radius_must_exceed_cutoff(farfield, small_grid):
    trace = FarFieldTrace.uniform(np.ones(8))
    with pytest.raises(DomainError):
        farfield.cesaro_error(GridField.zeros(small_grid), trace, [0.5])


def test_empty_annulus(farfield, small_grid):
    with pytest.raises(DomainError):
        farfield.annulus_error(GridField.zeros(small_grid), FarFieldTrace.uniform(np.ones(8)), 100.0, 101.0)


# --- decay ---

def test_model_wave_decay(farfield):
    grid = Grid(n=512, h=2.0 * math.pi / 16.0)
    r = np.maximum(grid.radius(), 1e-12)
    fit = farfield.decay_fit(GridField.from_array(grid, np.cos(r + 0.25 * math.pi) / np.sqrt(r)), (10.0, 90.0))
    assert fit.exponent == pytest.approx(-0.5, abs=0.05)
    assert fit.fit_range == (10.0, 90.0)


def test_gaussian_decays_fast(farfield, small_grid, gaussian):
    fit = farfield.decay_fit(gaussian(small_grid), (5.0, 12.0))
    assert fit.exponent < -2.0


def test_decay_fit_range(farfield, small_grid, gaussian):
    with pytest.raises(DomainError):
        farfield.decay_fit(gaussian(small_grid), (4.0, 10.0))
    with pytest.raises(DomainError):
        farfield.decay_fit(gaussian(small_grid), (5.0, 20.0))


def test_sector_wave_fit(farfield):
    grid = Grid(n=256, h=2.0 * math.pi / 16.0)
    r = np.maximum(grid.radius(), 1e-12)
    u = GridField.from_array(grid, 3.0 * np.cos(r + 0.2) / np.sqrt(r))
    fit = farfield.fit_annulus_wave(u, 10.0, 40.0, 0.0)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-10)
    assert fit.phase == pytest.approx(0.2, abs=1e-10)
    assert fit.residual < 1e-10


def test_wrap_phase():
    assert np.allclose(wrap_phase(np.array([0.0, 2.5 * math.pi, -0.5 * math.pi, 2.0 * math.pi + 0.1])),
                       [0.0, 0.5 * math.pi, -0.5 * math.pi, 0.1])


@pytest.mark.slow
def test_linear_far_field_of_gaussian(farfield):
    grid = Grid(n=2048, h=2.0 * math.pi / 16.0)
    resolvent = ResolventService(specfun=SpecialFunctionService(), fields=farfield.fields)
    f = GridField.from_function(grid, lambda x1, x2: np.exp(-0.5 * (x1 * x1 + x2 * x2)))
    u = resolvent.apply_resolvent_kernel(f)
    trace = farfield.hat_on_circle(f)
    errors = [farfield.annulus_error(u, trace, r_in, r_out).sup_error
              for r_in, r_out in [(20.0, 30.0), (50.0, 60.0), (80.0, 100.0)]]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.05 * FARFIELD_AMPLITUDE * math.exp(-0.5)


def _nonlinear_solution(farfield, p: float):
    specfun = SpecialFunctionService()
    coefficients = CoefficientService()
    dualvar = DualVariationalService(resolvent=ResolventService(specfun=specfun, fields=farfield.fields),
                                     fields=farfield.fields, specfun=specfun, coefficients=coefficients)
    grid = Grid(n=1024, h=2.0 * math.pi / 16.0)
    Q = coefficients.build("gaussian", grid)
    u0 = GridField.from_function(grid, lambda x1, x2: np.exp(-(x1 * x1 + x2 * x2)))
    u, report = dualvar.fixed_point_solve(u0, Q, p)
    assert report.status is SolveStatus.CONVERGED
    return u, Q, report


@pytest.fixture(scope="module")
def sextic_solution(farfield):
    return _nonlinear_solution(farfield, 6.0)


@pytest.mark.slow
def test_nonlinear_solution_decays_like_a_wave(farfield, sextic_solution):
    u, _, report = sextic_solution
    assert report.final_residual < 1e-6
    quarter = 0.25 * u.grid.side
    fit = farfield.decay_fit(u, (10.0, quarter))
    assert -0.6 <= fit.exponent <= -0.4


@pytest.mark.slow
def test_nonlinear_cesaro_errors_decrease(farfield, sextic_solution):
    u, Q, _ = sextic_solution
    w = u.samples.real
    trace = farfield.hat_on_circle(u.with_samples(Q.values * np.abs(w) ** 4 * w))
    radii = [0.25 * u.grid.side / 8.0 * 2 ** k for k in range(4)]
    errors = [row.error for row in farfield.cesaro_error(u, trace, radii)]
    assert all(later < earlier for earlier, later in zip(errors, errors[1:]))


@pytest.mark.slow
def test_far_field_routes_agree(farfield):
    u, Q, _ = _nonlinear_solution(farfield, 8.0)
    comparison = farfield.compare_farfield_routes(u, Q, 8.0, 60.0, 90.0)
    assert len(comparison.sectors) == 8
    assert comparison.amplitude_defect < 0.05
    assert comparison.phase_defect < 0.1


def test_route_comparison_needs_shared_grid(farfield, small_grid, resolvent_grid, gaussian):
    Q = CoefficientService().build("gaussian", small_grid)
    with pytest.raises(GridMismatchError):
        farfield.compare_farfield_routes(gaussian(resolvent_grid), Q, 6.0, 10.0, 20.0)
