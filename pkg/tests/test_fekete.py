"""
Tests for approximate Fekete points, Lagrange interpolation, the weighted
reconstruction formula and the downstream family checks.
"""

import math

import numpy as np
import pytest
from scipy import special
from scipy.stats import ortho_group

from bandlimit_lab.families import make_grid_family
from bandlimit_lab.fekete import (
    CapPanel,
    _exhaustive_best,
    approximate_fekete,
    default_cap_panel,
    default_function_panel,
    dilated_family_check,
    dilated_level,
    eigenfunction_panel,
    equidistribution_test,
    fekete_family,
    interpolate,
    lagrange_eval,
    lagrange_matrix,
    product_property_check,
    weighted_bandwidth,
    weighted_kernel,
    weighted_kernel_l1,
    weighted_reconstruction,
)
from bandlimit_lab.kernels import evaluate_function, random_coefficients
from bandlimit_lab.manifold import Circle, Sphere2, Torus2, create_manifold, eigenbasis, evaluate_basis
from bandlimit_lab.utils import (
    BandwidthTooSmallError,
    EnlargeCandidatesError,
    InvalidParameterError,
    MissingLevelError,
)

SMALL_C_GRID = [0.0, 0.5, 1.0, 1.5, 2.0]


@pytest.fixture
def torus():
    """Flat unit torus."""
    return Torus2()


@pytest.fixture
def torus_fekete(torus):
    """Fekete points for E_10 on the torus."""
    return approximate_fekete(torus, 10, seed=3)


# Test the selection
def test_fekete_basic_shape(torus, torus_fekete):
    """k_L nodes, a square Vandermonde matrix and a finite log-determinant."""
    k = len(eigenbasis(torus, 10))
    assert torus_fekete.k_L == k
    assert torus_fekete.vandermonde.shape == (k, k)
    assert math.isfinite(torus_fekete.log_abs_det)
    assert torus_fekete.candidate_count == 4 * k
    assert torus_fekete.candidate_descriptor == f"low-discrepancy(n={4 * k}, seed=3)"
    assert torus_fekete.separation > 0


def test_exchange_never_lowers_determinant(torus_fekete):
    """The swap history is nondecreasing and ends at least at the greedy value."""
    history = np.array(torus_fekete.history)
    assert history[0] == torus_fekete.greedy_log_abs_det
    assert np.all(np.diff(history) >= 0)
    assert torus_fekete.log_abs_det >= torus_fekete.greedy_log_abs_det - 1e-10
    assert torus_fekete.log_abs_det == pytest.approx(history[-1], abs=1e-8)


def test_tiny_instance_is_certified():
    """Three Fekete points for E_7 on the circle are equispaced."""
    circle = Circle()
    candidates = (np.arange(12) / 12.0)[:, None]
    result = approximate_fekete(circle, 7, candidates=candidates)
    assert result.k_L == 3
    assert result.certified_optimal
    assert result.candidate_descriptor == "explicit(n=12)"
    assert result.separation == pytest.approx(7 / 3)


@pytest.mark.parametrize(
    "manifold,L,count,k",
    [(Torus2(), 7, 12, 5), (Sphere2(), 2, 50, 4)],
)
def test_small_instances_reach_candidate_maximum(manifold, L, count, k):
    """With default options the result equals the maximum of |det| over every k_L-subset."""
    candidates = manifold.low_discrepancy_points(count)
    result = approximate_fekete(manifold, L, candidates=candidates)
    assert result.k_L == k
    assert result.certified_optimal
    phi = evaluate_basis(manifold, eigenbasis(manifold, L), manifold.canonicalize(candidates))
    _, best = _exhaustive_best(phi, k)
    assert result.log_abs_det == pytest.approx(best, rel=1e-10)
    assert result.history[-1] == pytest.approx(best, rel=1e-10)


def test_exchange_alone_is_a_local_maximizer():
    """Without the exhaustive stage no single swap improves the torus instance."""
    torus = Torus2()
    candidates = torus.low_discrepancy_points(12)
    result = approximate_fekete(torus, 7, candidates=candidates, exchange_rounds=50, exhaustive_limit=0)
    assert not result.certified_optimal
    assert result.lagrange_sup_candidates <= 1.0 + 1e-8


def test_exhaustive_limit_controls_certification(torus):
    """Above the exhaustive limit the result is not certified."""
    result = approximate_fekete(torus, 7, exhaustive_limit=10)
    assert not result.certified_optimal


def test_converged_exchange_bounds_lagrange_on_candidates():
    """After exchange converges every Lagrange function is at most 1 on the candidates."""
    sphere = Sphere2()
    result = approximate_fekete(sphere, 3, exchange_rounds=50, seed=1)
    assert result.k_L == 9
    assert result.lagrange_sup_candidates <= 1.0 + 1e-8
    assert result.lagrange_sup >= result.lagrange_sup_candidates


def test_candidate_validation(torus):
    """Too few candidates, negative rounds and rank-deficient candidates are errors."""
    with pytest.raises(InvalidParameterError):
        approximate_fekete(torus, 10, candidate_count=10)
    with pytest.raises(InvalidParameterError):
        approximate_fekete(torus, 10, exchange_rounds=-1)
    with pytest.raises(InvalidParameterError):
        approximate_fekete(torus, 10, candidates=torus.low_discrepancy_points(3))
    on_a_line = np.column_stack([np.arange(8) / 8.0, np.zeros(8)])
    with pytest.raises(EnlargeCandidatesError):
        approximate_fekete(torus, 7, candidates=on_a_line)


def test_fekete_family(torus):
    """One Fekete level per bandwidth, tagged as a Fekete family."""
    family, results = fekete_family(torus, [10, 7], seed=2)
    assert family.provenance == "fekete"
    assert family.bandwidths == [7.0, 10.0]
    assert set(results) == {7.0, 10.0}
    assert family.m_L(10) == results[10.0].k_L


@pytest.mark.parametrize(
    "manifold,options",
    [(Torus2(), {}), (Sphere2(), {"exchange_rounds": 1})],
)
def test_fekete_families_are_uniformly_separated(manifold, options):
    """s(L) >= 0.1 at every L in {10, 20, 30, 40}."""
    family, results = fekete_family(manifold, [10, 20, 30, 40], **options)
    separations = [results[L].separation for L in family.bandwidths]
    assert min(separations) >= 0.1


# Test Lagrange functions and interpolation
def test_lagrange_functions_are_cardinal(torus, torus_fekete):
    """l_i(x_j) = delta_ij at the nodes."""
    values = lagrange_matrix(torus, torus_fekete, torus_fekete.nodes)
    assert np.allclose(values, np.eye(torus_fekete.k_L), atol=1e-10)
    assert lagrange_eval(torus, torus_fekete, 2, torus_fekete.nodes[2]) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        lagrange_eval(torus, torus_fekete, torus_fekete.k_L, torus_fekete.nodes[0])


def test_interpolation_is_exact_on_band(torus, torus_fekete):
    """Interpolating samples of f in E_L reproduces f everywhere."""
    coeffs = random_coefficients(torus, 10, 1, seed=4)[:, 0]
    values = evaluate_function(torus, 10, coeffs, torus_fekete.nodes)
    points = torus.uniform_points(50, np.random.default_rng(0))
    assert np.allclose(
        interpolate(torus, torus_fekete, values, points),
        evaluate_function(torus, 10, coeffs, points),
        atol=1e-8,
    )
    with pytest.raises(InvalidParameterError):
        interpolate(torus, torus_fekete, values[:-1], points)


# Test the weighted kernel and reconstruction
def test_weighted_bandwidth():
    """The weighted kernel lives at L eps / C and must reach bandwidth 1."""
    assert weighted_bandwidth(20, 0.5, 2.0) == 5.0
    with pytest.raises(BandwidthTooSmallError):
        weighted_bandwidth(10, 0.05, 1.0)
    with pytest.raises(InvalidParameterError):
        weighted_bandwidth(10, 0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        weighted_bandwidth(10, 0.5, 0.0)


def test_weighted_kernel_is_one_on_diagonal(torus):
    """p(z, z) = 1 and the L1 mass of p(z, .) is finite and positive."""
    z = np.array([0.3, 0.6])
    assert weighted_kernel(torus, 20, 0.5, 1.0, z, z) == pytest.approx(1.0)
    assert 0 < weighted_kernel_l1(torus, 20, 0.5, 1.0, z) < math.inf


def test_weighted_reconstruction_exact_with_dilated_nodes(torus):
    """Fekete nodes for E_{L(1+eps)} reconstruct f in E_L exactly on the torus (C = 1)."""
    L, eps, C = 14, 0.5, 1.0
    nodes = approximate_fekete(torus, dilated_level(L, eps), seed=5)
    coeffs = random_coefficients(torus, L, 1, seed=6)[:, 0]
    points = torus.uniform_points(30, np.random.default_rng(1))
    rebuilt = weighted_reconstruction(torus, nodes, L, eps, C, coeffs, points)
    assert np.allclose(rebuilt, evaluate_function(torus, L, coeffs, points), atol=1e-8)


# Test dilated families
def test_dilated_level():
    """floor((1 + eps) L), robust to representation error."""
    assert dilated_level(10, 0.2) == 12
    assert dilated_level(10, -0.2) == 8
    assert dilated_level(5, 0.1) == 5
    assert dilated_level(10, 0.1) == 11


def test_dilated_family_check(torus):
    """Z(12) samples E_10 and Z(8) is a Riesz sequence for E_10."""
    family, _ = fekete_family(torus, [8, 10, 12], seed=1)
    (check,) = dilated_family_check(torus, family, [10], eps=0.2)
    assert (check.L_plus, check.L_minus) == (12, 8)
    assert check.frame.A > 0
    assert check.riesz.a > 0


def test_dilated_fekete_at_eps_three_tenths(torus):
    """With eps = 0.3, Z(floor(1.3L)) samples E_L and Z(floor(0.7L)) is a Riesz sequence for L in {15, 20, 25}."""
    family, _ = fekete_family(torus, [10, 14, 17, 19, 26, 32], seed=5)
    checks = dilated_family_check(torus, family, [15, 20, 25], eps=0.3)
    assert [(c.L_plus, c.L_minus) for c in checks] == [(19, 10), (26, 14), (32, 17)]
    for check in checks:
        assert check.frame.A > 0
        assert check.riesz.a > 0


def test_dilated_family_check_needs_levels(torus):
    """A missing dilated level is an error."""
    family, _ = fekete_family(torus, [10], seed=1)
    with pytest.raises(MissingLevelError):
        dilated_family_check(torus, family, [10], eps=0.2)
    with pytest.raises(InvalidParameterError):
        dilated_family_check(torus, family, [10], eps=1.0)


# Test equidistribution
def test_lattice_moments_vanish(torus):
    """Lattice families integrate the lowest eigenfunctions exactly."""
    family = make_grid_family(torus, [10, 20], nu=1.0)
    report = equidistribution_test(torus, family, fn_panel=eigenfunction_panel(torus))
    assert report.cap_count == 16 * 4
    assert len(report.function_names) == 4
    for row in report.rows:
        assert max(row.moment_errors) < 1e-12
        assert row.mass_error == pytest.approx((row.m_L - len(eigenbasis(torus, row.L))) / len(eigenbasis(torus, row.L)))
        assert 0 <= row.discrepancy < 1
    with pytest.raises(KeyError):
        report.row(15)


def test_fekete_equidistribution(torus):
    """Fekete families have zero mass error and small cap discrepancy."""
    family, _ = fekete_family(torus, [10, 20], seed=7)
    report = equidistribution_test(torus, family)
    assert all(row.mass_error == 0.0 for row in report.rows)
    assert report.row(20).discrepancy < 0.5


def test_fekete_moment_errors_decrease(torus):
    """Every torus panel moment error is smaller at L = 40 than at L = 10."""
    family, _ = fekete_family(torus, [10, 20, 40])
    report = equidistribution_test(torus, family)
    assert len(report.function_names) == 4
    for early, late in zip(report.row(10).moment_errors, report.row(40).moment_errors):
        assert late < early


def test_torus_panel_means_are_exact(torus):
    """A fine lattice averages each exp-cosine function to I0(3)^2."""
    fine = Torus2._lattice(64)
    for f in default_function_panel(torus):
        assert f.mean == pytest.approx(special.i0(3.0) ** 2, rel=1e-14)
        assert np.mean(f.func(fine)) == pytest.approx(f.mean, rel=1e-12)


def test_torus_panel_error_on_three_by_three_grid(torus):
    """On the 3x3 grid the first panel function averages to ((e^3 + 2e^-1.5)/3)^2."""
    family = make_grid_family(torus, [10], nu=0.3)
    assert family.m_L(10) == 9
    report = equidistribution_test(torus, family)
    expected = ((math.exp(3.0) + 2.0 * math.exp(-1.5)) / 3.0) ** 2 - special.i0(3.0) ** 2
    assert report.row(10).moment_errors[0] == pytest.approx(expected, rel=1e-12)
    assert all(e > 1.0 for e in report.row(10).moment_errors)


def test_equidistribution_panels(torus):
    """Default panels have four radii and named functions; empty panels are rejected."""
    caps = default_cap_panel(torus)
    assert caps.radii == pytest.approx((0.1, 0.2, 0.3, 0.4))
    assert [f.name for f in default_function_panel(torus)] == [
        "exp(3cos(2pi*x)+3cos(2pi*y))",
        "exp(3cos(2pi*(x+y))+3cos(2pi*(x-y)))",
        "exp(3cos(2pi*x)+3cos(2pi*(x+y)))",
        "exp(3cos(2pi*y)+3cos(2pi*(x-y)))",
    ]
    panel = default_function_panel(Sphere2(), count=3)
    assert [f.name for f in panel] == [f"phi{m.descriptor}" for m in eigenbasis(Sphere2(), 2).modes[1:4]]
    family = make_grid_family(torus, [10], nu=1.0)
    with pytest.raises(InvalidParameterError):
        equidistribution_test(torus, family, cap_panel=CapPanel(np.zeros((0, 2)), (0.1,)))


# Test the product property
def test_torus_admissibility_constant(torus):
    """On the torus E_L * E_{eps L} sits in E_{L(1+eps)}: C = 1 on the 0.25 grid."""
    report = product_property_check(torus, 20, 0.5, trials=2)
    assert report.C == 1.0
    assert report.residuals[1.0] < 1e-10
    assert report.residuals[0.75] > 1e-10
    values = [report.residuals[C] for C in sorted(report.residuals)]
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_circle_admissibility_constant():
    """Frequencies add on the circle, so C <= 1."""
    report = product_property_check(Circle(), 20, 0.5, C_grid=SMALL_C_GRID, trials=2)
    assert report.C is not None
    assert report.C <= 1.0


def test_product_admissibility_constant(torus):
    """product(torus2, circle) has C at most twice the larger factor constant."""
    product = create_manifold("product(torus2,circle)")
    constants = [
        product_property_check(M, 20, 0.5, C_grid=SMALL_C_GRID, trials=2).C for M in (torus, Circle(), product)
    ]
    assert None not in constants
    C_torus, C_circle, C_product = constants
    assert C_product <= 2.0 * max(C_torus, C_circle)


def test_admissibility_validation(torus):
    """eps and trials must be positive and the trimmed grid nonempty."""
    with pytest.raises(InvalidParameterError):
        product_property_check(torus, 20, 0.0)
    with pytest.raises(InvalidParameterError):
        product_property_check(torus, 20, 0.5, trials=0)
    with pytest.raises(InvalidParameterError):
        product_property_check(torus, 20, 0.5, C_grid=[10.0])


def test_determinant_is_basis_independent(torus_fekete):
    """An orthogonal change of eigenbasis leaves log|det V| and so the maximizer unchanged."""
    Q = ortho_group.rvs(torus_fekete.k_L, random_state=0)
    _, logdet = np.linalg.slogdet(torus_fekete.vandermonde @ Q)
    assert logdet == pytest.approx(torus_fekete.log_abs_det, abs=1e-9)
