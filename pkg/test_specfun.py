import math

import mpmath
import numpy as np
import pytest
from scipy import special

from services.errors import DomainError
from services.specfun_service import PHI_BOUND_REFERENCE, PHI_FAR_CONSTANT, SpecialFunctionService


@pytest.fixture(scope="module")
def specfun():
    return SpecialFunctionService()


def test_hankel_at_one_matches_reference(specfun):
    value = specfun.eval_hankel0(1.0)
    assert value.real == pytest.approx(0.7651976866, abs=1e-10)
    assert value.imag == pytest.approx(0.0882569642, abs=1e-10)


@pytest.mark.parametrize("r", [1e-6, 1e-3, 0.5, 2.404825557695773, 7.0, 11.99, 12.0, 12.01, 30.0, 1e3, 1e4])
def test_hankel_against_arbitrary_precision(specfun, r):
    mpmath.mp.dps = 30
    exact = complex(mpmath.besselj(0, r) + 1j * mpmath.bessely(0, r))
    value = specfun.eval_hankel0(r)
    assert abs(value - exact) <= 1e-10 * abs(exact)


def test_hankel_vectorized_against_scipy(specfun):
    r = np.geomspace(1e-6, 1e4, 4001)
    value = specfun.eval_hankel0(r)
    exact = special.hankel1(0, r)
    assert np.max(np.abs(value - exact) / np.abs(exact)) < 1e-10


def test_wronskian(specfun):
    r = np.geomspace(0.01, 100.0, 2001)
    h0 = specfun.eval_hankel0(r)
    wronskian = h0.real * special.y1(r) - special.j1(r) * h0.imag
    assert np.max(np.abs(wronskian * (0.5 * math.pi * r) - 1.0)) < 1e-8


def test_branches_agree_across_crossover(specfun):
    r = np.linspace(10.0, 16.0, 241)
    series = specfun.hankel0_series(r)
    asymptotic = specfun.hankel0_asymptotic(r)
    assert np.max(np.abs(series - asymptotic) / np.abs(asymptotic)) < 1e-9
    crossover = specfun.CROSSOVER_RADIUS
    below = specfun.eval_hankel0(np.nextafter(crossover, 0.0))
    assert abs(specfun.eval_hankel0(crossover) - below) < 1e-9 * abs(below)


def test_hankel_large_r_modulus(specfun):
    assert abs(specfun.eval_hankel0(100.0)) == pytest.approx(math.sqrt(2.0 / (100.0 * math.pi)), rel=2e-3)


def test_hankel_real_part_tends_to_one(specfun):
    assert specfun.eval_hankel0(1e-6).real == pytest.approx(1.0, abs=1e-11)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_nonpositive_radius_is_rejected(specfun, bad):
    with pytest.raises(DomainError):
        specfun.eval_hankel0(bad)
    with pytest.raises(DomainError):
        specfun.eval_phi(bad)


def test_phi_at_one(specfun):
    value = specfun.eval_phi(1.0)
    assert value.real == pytest.approx(-0.0220642, abs=1e-7)
    assert value.imag == pytest.approx(0.1912994, abs=1e-7)
    assert specfun.eval_re_phi(1.0) == pytest.approx(value.real)


def test_phi_far_field_constant(specfun):
    r = np.array([1e3, 5e3, 1e4])
    scaled = np.sqrt(r) * np.abs(specfun.eval_phi(r))
    assert np.all(np.abs(scaled - PHI_FAR_CONSTANT) < 1e-4)
    assert PHI_FAR_CONSTANT == pytest.approx(0.1994711, abs=1e-7)


def test_phi_asymptotic_tracks_phi(specfun):
    r = np.array([200.0, 1000.0])
    assert np.max(np.abs(specfun.phi_asymptotic(r) - specfun.eval_phi(r)) * np.sqrt(r)) < 1e-3


def test_phi_log_singularity(specfun):
    r = np.array([1e-6, 1e-8])
    ratio = 2.0 * math.pi * specfun.eval_phi(r).real / np.log(2.0 / r)
    assert np.all(np.abs(ratio - 1.0) < 0.05)
    assert np.max(np.abs(specfun.phi_small_r(r) - specfun.eval_phi(r).real)) < 1e-9


def test_bound_constant_at_one(specfun):
    assert specfun.check_phi_bound([1.0]) == pytest.approx(abs(specfun.eval_phi(1.0)), rel=1e-12)
    assert specfun.check_phi_bound([1.0]) == pytest.approx(0.1925, abs=1e-4)


def test_bound_constant_reference_and_monotone(specfun):
    r = np.geomspace(1e-6, 1e4, 100_000)
    full = specfun.check_phi_bound(r)
    assert full == pytest.approx(PHI_BOUND_REFERENCE, abs=2e-4)
    assert specfun.check_phi_bound(r[::7]) <= full


def test_bound_needs_samples(specfun):
    with pytest.raises(DomainError):
        specfun.check_phi_bound([])


def test_psi_extremes(specfun):
    # Re Φ is positive and decreasing near 0, so its infimum on (0, t] is Re Φ(t)
    assert specfun.psi_upper(0.1) == pytest.approx(specfun.eval_phi(0.1).real, rel=1e-12)
    outer = specfun.psi_lower(0.5)
    assert outer >= abs(specfun.eval_phi(0.5).real)
    assert outer >= abs(specfun.eval_phi(4.0).real)
    with pytest.raises(DomainError):
        specfun.psi_upper(0.0)
