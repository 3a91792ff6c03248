import math

import numpy as np
import pytest

from modals.field import Grid, GridField
from services.coefficient_service import CoefficientService
from services.errors import DomainError, GridMismatchError, ResolutionError
from services.field_service import FieldService, smooth_window
from services.resolvent_service import ResolventService
from services.specfun_service import SpecialFunctionService


@pytest.fixture(scope="module")
def resolvent():
    return ResolventService(specfun=SpecialFunctionService(), fields=FieldService())


@pytest.fixture(scope="module")
def coefficients():
    return CoefficientService()


@pytest.fixture(scope="module")
def decomposition(resolvent):
    # 2π/L <= 1/24 needs L >= 151
    return resolvent.build_decomposition(Grid(n=512, h=math.pi / 8.0))


# --- kernel sampling ---

def test_origin_value_rules(resolvent):
    h = 2.0 * math.pi / 16.0
    lattice = resolvent.origin_value(h, "lattice")
    cell = resolvent.origin_value(h, "cell-average")
    assert lattice.imag == 0.25 and cell.imag == 0.25
    # both stand in for the log singularity: larger than Re Φ one cell away, growing as h shrinks
    neighbour = resolvent.specfun.eval_phi(h).real
    assert lattice.real > neighbour and cell.real > neighbour
    assert resolvent.origin_value(h / 2.0, "lattice").real > lattice.real
    with pytest.raises(DomainError):
        resolvent.origin_value(h, "midpoint")


def test_sampled_kernel_is_symmetric(resolvent, small_grid):
    phi = resolvent.sample_phi(small_grid)
    inner = phi[1:, 1:]
    assert np.allclose(inner, inner[::-1, :], rtol=0, atol=1e-15)
    assert np.allclose(inner, inner.T, rtol=0, atol=1e-15)


# --- backends ---

def test_zero_source(resolvent, small_grid):
    u = resolvent.apply_resolvent_kernel(GridField.zeros(small_grid))
    assert np.all(u.samples == 0)
    assert not u.metadata["support_violation"]


def test_coarse_grid_is_rejected(resolvent):
    with pytest.raises(ResolutionError):
        resolvent.apply_resolvent_kernel(GridField.zeros(Grid(n=64, h=0.5)))


def test_real_part_operator_needs_real_data(resolvent, small_grid, gaussian):
    f = gaussian(small_grid)
    with pytest.raises(DomainError):
        resolvent.apply_R(f.scaled(1j))


def test_real_part_operator_is_real_part_of_resolvent(resolvent, small_grid, gaussian):
    f = gaussian(small_grid)
    u = resolvent.apply_resolvent_kernel(f)
    w = resolvent.apply_R(f)
    assert np.max(np.abs(w.samples - u.samples.real)) < 1e-12 * np.max(np.abs(u.samples))
    assert w.is_real()


def test_gaussian_spectral_residual(resolvent, resolvent_grid, gaussian):
    f = gaussian(resolvent_grid)
    u = resolvent.apply_resolvent_kernel(f)
    assert resolvent.spectral_residual(u, f) < 5e-3


def test_backends_agree(resolvent, resolvent_grid, gaussian):
    f = gaussian(resolvent_grid)
    u = resolvent.apply_resolvent_kernel(f)
    w = resolvent.apply_resolvent_extrapolated(f)
    assert resolvent.relative_difference(w, u) < 0.05
    assert w.metadata["backend"] == "multiplier-extrapolated"


def test_outgoing_radiation(resolvent, resolvent_grid, gaussian):
    f = gaussian(resolvent_grid)
    u = resolvent.apply_resolvent_kernel(f)
    quarter = 0.25 * resolvent_grid.side
    outgoing = resolvent.radiation_defect(u, quarter - 2.0 * math.pi, quarter)
    incoming = resolvent.radiation_defect(u.with_samples(np.conj(u.samples)), quarter - 2.0 * math.pi, quarter)
    assert outgoing < 0.05
    assert incoming > 1.0


def test_support_violation_is_flagged(resolvent, small_grid):
    edge = 0.45 * small_grid.side
    f = GridField.from_function(small_grid, lambda x1, x2: np.exp(-0.5 * ((x1 - edge) ** 2 + x2 ** 2)))
    u = resolvent.apply_resolvent_kernel(f)
    assert u.metadata["support_violation"]
    assert u.metadata["outside_mass"] > 0.5


def test_high_frequency_source_needs_no_limit(resolvent, resolvent_grid, gaussian):
    # Ff vanishes for |ξ| <= 5/4, so the symbol never meets the unit circle
    f = resolvent.fields.apply_multiplier(gaussian(resolvent_grid), lambda m: 1.0 - smooth_window(m, 1.25, 1.5))
    a = resolvent.apply_resolvent_multiplier(f, 1e-3)
    b = resolvent.apply_resolvent_multiplier(f, 2e-3)
    assert resolvent.relative_difference(a, b) < 1e-2
    with pytest.raises(DomainError):
        resolvent.apply_resolvent_multiplier(f, 0.0)


def test_extrapolation_needs_distinct_eps(resolvent, small_grid, gaussian):
    with pytest.raises(DomainError):
        resolvent.apply_resolvent_extrapolated(gaussian(small_grid), (0.1, 0.1))


# --- Birman-Schwinger operator ---

def test_zero_coefficient_gives_zero(resolvent, coefficients, small_grid, gaussian):
    Q = coefficients.build("gaussian", small_grid, {"q0": 0.0})
    out = resolvent.apply_K(gaussian(small_grid), Q, 6.0)
    assert np.all(out.samples == 0)


def test_operator_is_self_adjoint(resolvent, coefficients, small_grid):
    Q = coefficients.build("gaussian", small_grid)
    rng = np.random.default_rng(3)
    v = GridField.from_array(small_grid, rng.standard_normal((64, 64)))
    w = GridField.from_array(small_grid, rng.standard_normal((64, 64)))
    fields = resolvent.fields
    left = fields.real_inner(v.samples, resolvent.apply_K(w, Q, 6.0).samples, small_grid.h)
    right = fields.real_inner(w.samples, resolvent.apply_K(v, Q, 6.0).samples, small_grid.h)
    assert abs(left - right) <= 1e-8 * fields.lp_norm(v, 2.0) * fields.lp_norm(w, 2.0)


def test_narrow_bump_has_positive_form(resolvent, coefficients, small_grid, gaussian):
    Q = coefficients.build("gaussian", small_grid)
    v = gaussian(small_grid, scale=4.0)
    form = resolvent.fields.real_inner(v.samples, resolvent.apply_K(v, Q, 6.0).samples, small_grid.h)
    assert form > 0


def test_operator_grid_mismatch(resolvent, coefficients, small_grid):
    Q = coefficients.build("gaussian", small_grid)
    with pytest.raises(GridMismatchError):
        resolvent.apply_K(GridField.zeros(Grid(n=128, h=small_grid.h)), Q, 6.0)


@pytest.mark.parametrize("t, q, expected", [
    (6.0 / 5.0, 6.0, True),
    (1.0, 8.0, True),
    (1.0, math.inf, False),
    (4.0 / 3.0, 4.0, False),
    (1.2, 5.0, False),
])
def test_admissible_pairs(resolvent, t, q, expected):
    assert resolvent.admissible_pair(t, q) is expected


# --- decomposition ---

def test_decomposition_sums_to_kernel(decomposition):
    gap = decomposition.phi.samples - decomposition.phi1.samples - decomposition.phi2.samples
    assert np.max(np.abs(gap)) < 1e-12
    # Im Φ = J0/4 has its transform on the unit circle, where the collar is 1
    assert np.max(np.abs(decomposition.phi2.samples.imag)) < 1e-12


def test_decomposition_decay(resolvent, decomposition):
    bounds = resolvent.fit_decomposition_bounds(decomposition)
    assert bounds.phi1_exponent == pytest.approx(-0.5, abs=0.1)
    assert bounds.phi2_exponent <= -2.5
    assert bounds.c1 > 0 and bounds.c2 > 0


def test_decomposition_constants_bound_every_sample(resolvent, decomposition):
    bounds = resolvent.fit_decomposition_bounds(decomposition)
    r = decomposition.grid.radius()
    phi1 = np.abs(decomposition.phi1.samples)
    assert np.all(phi1 <= bounds.c1 * (1.0 + r) ** -0.5 * (1.0 + 1e-12))
    # the constant is attained, not just an upper estimate
    assert np.max(phi1 * np.sqrt(1.0 + r)) == pytest.approx(bounds.c1, rel=1e-12)
    positive = r > 0
    profile = np.minimum(1.0 + np.abs(np.log(r[positive])), r[positive] ** -3.0)
    phi2 = np.abs(decomposition.phi2.samples[positive])
    assert np.all(phi2 <= bounds.c2 * profile * (1.0 + 1e-12))


def test_decomposition_needs_fine_dual_grid(resolvent, small_grid):
    with pytest.raises(ResolutionError):
        resolvent.build_decomposition(small_grid)


def test_dyadic_partition_sums_to_one(resolvent, small_grid):
    pieces = resolvent.dyadic_partition(small_grid, 3)
    total = np.sum(pieces, axis=0)
    r = small_grid.radius()
    assert np.allclose(total[r <= 8.0], 1.0, atol=1e-14)


def test_dyadic_piece_range(resolvent, decomposition):
    piece = resolvent.dyadic_piece(decomposition, 3)
    assert piece.annulus == (4.0, 16.0)
    with pytest.raises(DomainError):
        resolvent.dyadic_piece(decomposition, 8)
