"""
Tests for classical and modified concentration operators, their spectra,
trace identities and the (L, R) plateau scan.
"""

import numpy as np
import pytest

from bandlimit_lab.concentration import (
    ConcentrationSpectrum,
    classical_matrix,
    concentration_spectrum,
    count_in_ball,
    filter_vector,
    modified_matrix,
    plateau_scan,
    spectrum,
    trace_identities,
)
from bandlimit_lab.families import make_grid_family
from bandlimit_lab.manifold import Sphere2, Torus2, ball_volume, eigenbasis
from bandlimit_lab.utils import InvalidParameterError, NumericalIntegrityError, RadiusTooLargeError


@pytest.fixture
def torus():
    """Flat unit torus."""
    return Torus2()


@pytest.fixture
def sphere():
    """Unit round sphere."""
    return Sphere2()


# Test matrix assembly
def test_global_concentration_is_identity(torus):
    """Concentrating on the whole manifold gives the identity matrix."""
    D = classical_matrix(torus, 15)
    assert np.allclose(D, np.eye(len(eigenbasis(torus, 15))), atol=1e-12)


def test_ball_matrix_exactly_symmetric(sphere):
    """The assembled matrix equals its transpose bit for bit."""
    D = classical_matrix(sphere, 8, sphere.base_point, 0.7)
    assert np.array_equal(D, D.T)


def test_filter_vector(torus):
    """eps = 0 gives ones; otherwise beta decreases to zero at the band edge."""
    basis = eigenbasis(torus, 20)
    assert np.array_equal(filter_vector(torus, 20, 0.0), np.ones(len(basis)))
    beta = filter_vector(torus, 20, 0.4)
    assert beta[0] == 1.0
    assert np.all(np.diff(beta) <= 1e-15)
    assert np.all((beta >= 0) & (beta <= 1))


def test_modified_matrix_wraps_classical(torus):
    """T = beta D beta entrywise, and eps = 0 returns D itself."""
    center, radius = torus.base_point, 0.15
    D = classical_matrix(torus, 20, center, radius)
    beta = filter_vector(torus, 20, 0.3)
    T = modified_matrix(torus, 20, 0.3, center, radius)
    assert np.allclose(T, beta[:, None] * D * beta[None, :], atol=1e-15)
    assert np.array_equal(modified_matrix(torus, 20, 0.0, center, radius), D)
    with pytest.raises(InvalidParameterError):
        modified_matrix(torus, 20, 1.0, center, radius)


# Test spectra and counting bounds
@pytest.mark.parametrize("eps", [0.0, 0.3])
def test_spectrum_in_unit_interval_with_trace_bounds(torus, eps):
    """Eigenvalues lie in [0, 1] and the counts obey the trace inequalities."""
    gammas = (0.1, 0.5, 0.9)
    spec = concentration_spectrum(torus, 25, eps, radius=0.12, gammas=gammas)
    assert spec.size == len(eigenbasis(torus, 25))
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    assert spec.eigenvalues[-1] >= -1e-8
    assert spec.eigenvalues[0] <= 1 + 1e-8
    assert spec.T2 <= spec.T1 + 1e-6
    for g in gammas:
        assert spec.counts_above[g] >= spec.trace_lower_bound(g) - 1e-6
        assert spec.counts_at_least[g] <= spec.trace_upper_bound(g) + 1e-6


def test_homogeneous_trace_is_dimension_times_volume_fraction(sphere):
    """T1 of the classical operator equals k_L vol(A) / vol(M) on the sphere."""
    L, radius = 10, 0.6
    spec = concentration_spectrum(sphere, L, 0.0, radius=radius)
    k = len(eigenbasis(sphere, L))
    expected = k * ball_volume(sphere, sphere.base_point, radius) / sphere.total_volume
    assert spec.T1 == pytest.approx(expected, rel=1e-9)


def test_smoothing_lowers_the_trace(torus):
    """The modified operator has smaller trace than the classical one."""
    classical = concentration_spectrum(torus, 20, 0.0, radius=0.1)
    modified = concentration_spectrum(torus, 20, 0.4, radius=0.1)
    assert modified.T1 < classical.T1


def test_spectrum_rejects_bad_matrices():
    """Non-square and asymmetric matrices are invalid; escaping [0, 1] is a numerical failure."""
    with pytest.raises(InvalidParameterError):
        spectrum(np.ones((2, 3)))
    with pytest.raises(InvalidParameterError):
        spectrum(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(NumericalIntegrityError):
        spectrum(np.diag([1.5, 0.2]))


def test_spectrum_counts():
    """Eigenvalues come out descending with counts keyed by threshold."""
    spec = spectrum(np.diag([0.2, 0.9, 0.0, 0.5]), gammas=(0.3,), deltas=(0.6, 0.1))
    assert isinstance(spec, ConcentrationSpectrum)
    assert np.allclose(spec.eigenvalues, [0.9, 0.5, 0.2, 0.0])
    assert spec.counts_above == {0.3: 2}
    assert spec.counts_at_least == {0.6: 1, 0.1: 3}
    assert spec.T1 == pytest.approx(1.6)
    assert spec.T2 == pytest.approx(1.1)


# Test trace identities
@pytest.mark.parametrize("eps", [0.0, 0.25])
def test_trace_identities_agree(torus, eps):
    """Matrix traces match the kernel integrals."""
    ids = trace_identities(torus, 20, eps, radius=0.1)
    assert ids.T1_matrix == pytest.approx(ids.T1_kernel, rel=1e-8)
    assert ids.T2_matrix == pytest.approx(ids.T2_kernel, rel=1e-6)
    assert len(ids.as_tuple()) == 4


def test_trace_identities_at_bandwidth_forty(torus):
    """On B(0, 0.2) at L = 40 and eps = 0.2 the matrix and kernel traces agree."""
    ids = trace_identities(torus, 40, 0.2, radius=0.2)
    assert ids.T1_matrix == pytest.approx(ids.T1_kernel, rel=1e-6)
    assert ids.T2_matrix == pytest.approx(ids.T2_kernel, rel=1e-5)


def test_trace_identities_on_sphere(sphere):
    """The identities also hold on a spherical cap."""
    ids = trace_identities(sphere, 8, 0.3, radius=0.5)
    assert ids.T1_matrix == pytest.approx(ids.T1_kernel, rel=1e-8)
    assert ids.T2_matrix == pytest.approx(ids.T2_kernel, rel=1e-6)


# Test counting points
def test_count_in_ball(torus):
    """A 10x10 lattice has 5 points in the closed ball of radius 0.1 at the origin."""
    pts = Torus2._lattice(10)
    assert count_in_ball(torus, pts, torus.base_point, 0.1) == 5
    assert count_in_ball(torus, pts, torus.base_point, 0.0) == 0
    assert count_in_ball(torus, pts, torus.base_point, -1.0) == 0


# Test the plateau scan
def test_plateau_scan_trace_ratio(torus):
    """For eps = 0 the trace ratio is 1 on a homogeneous space."""
    report = plateau_scan(torus, [10, 20], [1.0, 2.0], eps=0.0, rho=0.2)
    assert len(report.rows) == 4
    assert report.dimension == 2
    for row in report.rows:
        assert row.trace_ratio == pytest.approx(1.0, abs=1e-6)
        assert row.radius == pytest.approx(row.R / row.L)
        assert row.N_L is None and row.t is None
    assert set(report.exponents) == {10.0, 20.0}
    assert set(report.spreads) == {10.0, 20.0}
    assert report.row(20, 2.0).dilated_counts.keys() == {0.1, 0.5, 0.9}
    with pytest.raises(KeyError):
        report.row(30, 1.0)


def test_plateau_scan_with_family(torus):
    """With a family the annulus counts satisfy n_L <= N_L."""
    family = make_grid_family(torus, [10, 20], nu=1.5)
    report = plateau_scan(torus, [10, 20], [2.0, 3.0], eps=0.3, family=family, t=1.0)
    for row in report.rows:
        assert row.t == 1.0
        assert 0 <= row.n_L <= row.N_L


def test_plateau_scan_default_annulus_width(torus):
    """Without t the annulus width is 3 / s for the family's separation s."""
    family = make_grid_family(torus, [10], nu=1.5)
    report = plateau_scan(torus, [10], [2.0], eps=0.0, family=family)
    s = 10 * (1 / 15)
    assert report.rows[0].t == pytest.approx(3 / s)


def test_plateau_scan_validation(torus):
    """Empty grids, negative rho and oversized radii are rejected."""
    with pytest.raises(InvalidParameterError):
        plateau_scan(torus, [], [1.0], eps=0.0)
    with pytest.raises(InvalidParameterError):
        plateau_scan(torus, [10], [1.0], eps=0.0, rho=-0.1)
    with pytest.raises(RadiusTooLargeError):
        plateau_scan(torus, [10], [6.0], eps=0.0)


def test_smoothed_trace_ratio_plateau(torus):
    """With eps = 0.2 the trace ratio stays in [(1 - eps)^2 - 0.1, 1.1]."""
    report = plateau_scan(torus, [40, 60], [6.0, 8.0], eps=0.2, gammas=[0.5])
    assert len(report.rows) == 4
    for row in report.rows:
        assert (1 - 0.2) ** 2 - 0.1 <= row.trace_ratio <= 1.1


def test_boundary_term_grows_like_perimeter(torus):
    """(T1 - T2)/R stays within a factor 3 over R in {4, 6, 8, 10} at L = 60."""
    report = plateau_scan(torus, [60], [4.0, 6.0, 8.0, 10.0], eps=0.2, gammas=[0.5])
    scaled = [report.row(60, R).T1_minus_T2 / R for R in (4.0, 6.0, 8.0, 10.0)]
    assert min(scaled) > 0
    assert max(scaled) / min(scaled) <= 3.0
    assert report.spreads[60.0] == pytest.approx(max(scaled) / min(scaled))
