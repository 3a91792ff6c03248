import math

import numpy as np
import pytest
from scipy import integrate, special

from modals.field import Grid
from modals.kernel import PHI_COLLAR
from services.errors import DomainError
from services.estimates_service import EstimatesService
from services.field_service import FieldService
from services.resolvent_service import ResolventService
from services.specfun_service import SpecialFunctionService


@pytest.fixture(scope="module")
def estimates():
    fields = FieldService()
    return EstimatesService(resolvent=ResolventService(specfun=SpecialFunctionService(), fields=fields),
                            fields=fields)


@pytest.fixture(scope="module")
def decomposition(estimates):
    return estimates.resolvent.build_decomposition(Grid(n=512, h=math.pi / 8.0))


def _bump_oracle() -> complex:
    """(Φ∗f)(0) for f = (1 - |x|²)²₊ by adaptive quadrature."""
    def weight(r):
        return 2.0 * math.pi * (1.0 - r * r) ** 2 * r
    re, _ = integrate.quad(lambda r: -0.25 * special.y0(r) * weight(r), 0.0, 1.0, limit=200)
    im, _ = integrate.quad(lambda r: 0.25 * special.j0(r) * weight(r), 0.0, 1.0, limit=200)
    return complex(re, im)


def test_probes_are_seeded(estimates, small_grid):
    a = estimates.collar_probes(small_grid, 3, seed=11, collar=PHI_COLLAR)
    b = estimates.collar_probes(small_grid, 3, seed=11, collar=PHI_COLLAR)
    assert len(a) == 3
    for left, right in zip(a, b):
        assert np.array_equal(left.samples, right.samples)
        assert left.is_real()


def test_dyadic_scan_shape(estimates, decomposition):
    scan = estimates.dyadic_norm_scan(decomposition, (1, 3), probes=2)
    assert [row.j for row in scan.rows] == [1, 2, 3]
    assert scan.excluded == []
    assert all(row.sup_norm > 0 and row.ratio > 0 for row in scan.rows)
    assert scan.sup_slope is not None


def test_dyadic_scan_range_checked(estimates, decomposition):
    with pytest.raises(DomainError):
        estimates.dyadic_norm_scan(decomposition, (3, 7))
    with pytest.raises(DomainError):
        estimates.dyadic_norm_scan(decomposition, (4, 2))


def test_truncation_scan(estimates, decomposition):
    scan = estimates.truncated_phi1_scan(decomposition, [16.0, 4.0, 8.0], p=12.0, probes=2)
    assert scan.lambda_p == pytest.approx(0.25)
    assert not scan.flagged
    assert [row.radius for row in scan.rows] == [4.0, 8.0, 16.0]
    assert scan.exponent is not None


def test_truncation_scan_flags_low_exponents(estimates, decomposition):
    scan = estimates.truncated_phi1_scan(decomposition, [8.0], p=6.0, probes=1)
    assert scan.flagged
    assert scan.lambda_p == pytest.approx(0.0)
    with pytest.raises(DomainError):
        estimates.truncated_phi1_scan(decomposition, [8.0], p=2.0)


def test_endpoint_flags_under_resolved_bumps(estimates, small_grid):
    scan = estimates.endpoint_counterexample([1.0], grid=small_grid)
    assert scan.rows[0].flagged
    assert scan.slope is None
    with pytest.raises(DomainError):
        estimates.endpoint_counterexample([0.0], grid=small_grid)


def test_boundedness_families_are_nested(estimates):
    scan = estimates.boundedness_probe([6.0, 8.0], [1, 2, 4], seed=5, grid=Grid(n=128, h=math.pi / 8.0))
    for p in (6.0, 8.0):
        worst = [row.worst_ratio for row in scan.rows if row.p == p]
        assert len(worst) == 3
        assert worst == sorted(worst)
        assert worst[0] > 0


def test_boundedness_constant_settles(estimates):
    scan = estimates.boundedness_probe([6.0, 8.0], [8, 16, 32], seed=11, grid=Grid(n=128, h=math.pi / 8.0))
    assert set(scan.growth) == {6.0, 8.0}
    assert all(1.0 <= g <= estimates.STABLE_GROWTH for g in scan.growth.values())
    assert scan.stable


def test_single_family_has_no_growth(estimates):
    scan = estimates.boundedness_probe([6.0], [3], grid=Grid(n=128, h=math.pi / 8.0))
    assert scan.growth == {6.0: 1.0}
    assert scan.stable


def test_boundedness_rejects_inadmissible_exponent(estimates):
    with pytest.raises(DomainError):
        estimates.boundedness_probe([4.0], [1], grid=Grid(n=64, h=math.pi / 8.0))


def test_vanishing_forms_decay(estimates, decomposition):
    scan = estimates.quadratic_form_vanishing(decomposition, [1.0, 2.0, 4.0, 8.0], p=6.0)
    concentration = [row.concentration for row in scan.rows]
    assert all(a > b for a, b in zip(concentration, concentration[1:]))
    by_dilation = {row.dilation: row for row in scan.rows}
    assert abs(by_dilation[8.0].phi1_form) < abs(by_dilation[2.0].phi1_form)
    assert abs(by_dilation[8.0].phi2_form) < abs(by_dilation[4.0].phi2_form)
    with pytest.raises(DomainError):
        estimates.quadratic_form_vanishing(decomposition, [1.0], p=4.0)


@pytest.mark.slow
def test_endpoint_growth_matches_log_rate(estimates):
    scan = estimates.endpoint_counterexample([1, 2, 4, 8, 16])
    assert scan.target_slope == pytest.approx(1.0 / 6.0)
    assert not any(row.flagged for row in scan.rows)
    assert 0.8 * scan.target_slope <= scan.slope <= 1.2 * scan.target_slope
    assert scan.real_slope == pytest.approx(scan.target_slope, rel=0.1)
    assert scan.rows[0].sup_modulus == pytest.approx(abs(_bump_oracle()), rel=0.01)


@pytest.mark.slow
def test_dyadic_scalings(estimates):
    decomp = estimates.resolvent.build_decomposition(Grid(n=2048, h=math.pi / 4.0))
    scan = estimates.dyadic_norm_scan(decomp, (3, 8))
    assert -0.65 <= scan.sup_slope <= -0.35
    assert 0.35 <= scan.ratio_slope <= 0.65


@pytest.mark.slow
def test_truncation_decay_for_p8(estimates, decomposition):
    scan = estimates.truncated_phi1_scan(decomposition, [4.0, 8.0, 16.0, 32.0, 64.0], p=8.0)
    assert scan.exponent <= -0.05
