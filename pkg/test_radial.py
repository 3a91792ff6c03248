import math

import numpy as np
import pytest
from scipy import special

from modals.field import Grid, GridField
from modals.radial import RadialProfile
from services.coefficient_service import CoefficientService
from services.dualvar_service import dualvar_service
from services.errors import DomainError, SolverFailure
from services.radial_service import RadialOracleService
from services.specfun_service import SpecialFunctionService


@pytest.fixture(scope="module")
def radial():
    return RadialOracleService(specfun=SpecialFunctionService())


def _no_potential(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@pytest.fixture(scope="module")
def bessel_profile(radial):
    # Q = 0 leaves u = a J0(r)
    return radial.integrate_radial(1.5, _no_potential, 6.0, r_max=80.0)


def _model_profile(amplitude: float, phase: float, r_max: float = 100.0) -> RadialProfile:
    r = np.arange(0.0, r_max + 0.005, 0.01)
    safe = np.maximum(r, 1e-3)
    u = amplitude * np.cos(safe + phase) / np.sqrt(safe)
    du = np.gradient(u, r)
    du[0] = 0.0
    return RadialProfile(r=r, u=u, du=du, amplitude=float(u[0]))


# --- integration ---

def test_linear_shot_is_bessel(bessel_profile):
    assert not bessel_profile.blew_up
    assert bessel_profile.r_max == pytest.approx(80.0)
    mask = bessel_profile.r <= 40.0
    exact = 1.5 * special.j0(bessel_profile.r[mask])
    assert np.max(np.abs(bessel_profile.u[mask] - exact)) < 1e-7


def test_linear_shot_phase(radial, bessel_profile):
    match = radial.match_asymptotics(bessel_profile, hankel_correction=True)
    assert match.phase == pytest.approx(-0.25 * math.pi, abs=1e-5)
    assert match.amplitude == pytest.approx(1.5 * math.sqrt(2.0 / math.pi), rel=1e-5)
    assert match.lock == pytest.approx(1.0, abs=1e-5)
    assert radial.phase_defect(match.phase) == pytest.approx(0.5 * math.pi, abs=1e-5)


def test_zero_amplitude_is_rejected(radial):
    with pytest.raises(DomainError):
        radial.integrate_radial(0.0, _no_potential, 6.0, r_max=10.0)


def test_finer_tolerance_changes_little(radial):
    loose = radial.integrate_radial(1.0, _no_potential, 6.0, r_max=30.0, rtol=1e-8)
    tight = radial.integrate_radial(1.0, _no_potential, 6.0, r_max=30.0)
    assert np.max(np.abs(loose.u - tight.u)) < 1e-6


# --- matching ---

def test_match_recovers_model_wave(radial):
    match = radial.match_asymptotics(_model_profile(3.0, 0.2))
    assert match.amplitude == pytest.approx(3.0, rel=1e-10)
    assert match.phase == pytest.approx(0.2, abs=1e-10)
    assert match.residual < 1e-10
    assert match.window == (75.0, 100.0)


def test_locked_model_wave(radial):
    match = radial.match_asymptotics(_model_profile(1.0, 0.25 * math.pi))
    assert match.lock == pytest.approx(0.0, abs=1e-10)
    assert radial.phase_defect(match.phase) < 1e-10


@pytest.mark.parametrize("window", [(10.0, 100.0), (95.0, 100.0), (80.0, 120.0)])
def test_matching_window_is_checked(radial, window):
    with pytest.raises(DomainError):
        radial.match_asymptotics(_model_profile(1.0, 0.0), window)


@pytest.mark.parametrize("phase, defect", [
    (0.25 * math.pi, 0.0),
    (1.25 * math.pi, 0.0),
    (-0.75 * math.pi, 0.0),
    (0.25 * math.pi + 0.3, 0.3),
    (0.25 * math.pi - 0.3, 0.3),
])
def test_phase_defect_is_taken_mod_pi(phase, defect):
    assert RadialOracleService.phase_defect(phase) == pytest.approx(defect, abs=1e-12)


# --- oracle quantities ---

def test_farfield_coefficient_without_potential(radial, bessel_profile):
    assert radial.farfield_coefficient(bessel_profile, _no_potential, 6.0) == 0.0


def test_compare_with_grid(radial, bessel_profile, small_grid):
    u = GridField.from_array(small_grid, 1.5 * special.j0(small_grid.radius()))
    assert radial.compare_with_grid(bessel_profile, u, r_limit=10.0) < 1e-6
    with pytest.raises(DomainError):
        radial.compare_with_grid(bessel_profile, u, r_limit=100.0)


def test_blown_up_profile_is_compared_on_its_finite_part(radial, bessel_profile, small_grid):
    u_tail = np.array(bessel_profile.u)
    du_tail = np.array(bessel_profile.du)
    cut = int(np.searchsorted(bessel_profile.r, 12.0))
    u_tail[cut:] = np.nan
    du_tail[cut:] = np.inf
    blown = RadialProfile(r=bessel_profile.r, u=u_tail, du=du_tail, amplitude=bessel_profile.amplitude, blew_up=True)
    u = GridField.from_array(small_grid, 1.5 * special.j0(small_grid.radius()))
    assert radial.compare_with_grid(blown, u, r_limit=10.0) < 1e-6
    with pytest.raises(DomainError):
        radial.compare_with_grid(blown, u, r_limit=15.0)


def test_shooting_without_lock_fails(radial):
    with pytest.raises(SolverFailure) as err:
        radial.shoot_solve(_no_potential, 6.0, a_bracket=(0.5, 1.0), r_max=60.0, scan_points=3)
    assert err.value.exit_code == 2
    assert [row["a"] for row in err.value.report] == [0.5, 0.75, 1.0]
    with pytest.raises(DomainError):
        radial.shoot_solve(_no_potential, 6.0, a_bracket=(1.0, 0.5))


@pytest.fixture(scope="module")
def gaussian_oracle(radial):
    coefficients = CoefficientService()
    q_profile = coefficients.radial_profile(coefficients.closure("gaussian"))
    result = radial.shoot_solve(q_profile, 6.0)
    return result, radial.integrate_radial(result.amplitude_at_origin, q_profile, 6.0, result.r_max)


@pytest.mark.slow
def test_gaussian_radial_solution(gaussian_oracle):
    result, _ = gaussian_oracle
    assert result.phase_defect < 1e-6
    assert result.amplitude_defect < 1e-2
    assert 0.2 <= result.amplitude_at_origin <= 3.0


@pytest.mark.slow
def test_grid_solution_matches_oracle(radial, gaussian_oracle):
    _, profile = gaussian_oracle
    grid = Grid(n=1024, h=2.0 * math.pi / 16.0)
    Q = dualvar_service.coefficients.build("gaussian", grid)
    u0 = GridField.from_function(grid, lambda x1, x2: np.exp(-(x1 * x1 + x2 * x2)))
    u, report = dualvar_service.fixed_point_solve(u0, Q, 6.0, tol=1e-6)
    assert report.converged
    assert report.backend["source_refinement"] == 4
    assert radial.compare_with_grid(profile, u, r_limit=20.0) < 0.02


def test_phase_scan_without_potential(radial):
    rows = radial.scan_phase(_no_potential, 6.0, [1.0, 2.0], r_max=60.0)
    assert [a for a, _, _ in rows] == [1.0, 2.0]
    for _, phase, lock in rows:
        assert phase == pytest.approx(-0.25 * math.pi, abs=1e-4)
        assert lock == pytest.approx(1.0, abs=1e-4)
