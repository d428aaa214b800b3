"""
Tests for spectral kernels: filters, reproduction, diagonal behaviour,
off-diagonal decay and the Bernstein gradient ratio.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandlimit_lab.kernels import (
    KernelSpec,
    apply_filter,
    bernstein_ratio,
    decay_fit,
    diagonal_ratio,
    evaluate_function,
    filter_norm_ratio,
    gradient_ratio,
    kernel_diagonal,
    kernel_l1_mass,
    kernel_matrix,
    kernel_value,
    random_coefficients,
    reproduce,
    smooth_cutoff,
)
from bandlimit_lab.manifold import Circle, Sphere2, Torus2, create_manifold, eigenbasis
from bandlimit_lab.utils import InvalidParameterError


@pytest.fixture
def torus():
    """Flat unit torus."""
    return Torus2()


@pytest.fixture
def sphere():
    """Unit round sphere."""
    return Sphere2()


# Test the smooth cutoff
def test_cutoff_plateau_and_support():
    """beta is exactly 1 up to 1-eps and exactly 0 from 1 on."""
    x = np.array([0.0, 0.3, 0.7, 1.0, 1.5])
    values = smooth_cutoff(0.3, x)
    assert values[0] == 1.0
    assert values[1] == 1.0
    assert values[2] == 1.0
    assert values[3] == 0.0
    assert values[4] == 0.0
    assert 0.0 < smooth_cutoff(0.3, 0.85) < 1.0


def test_cutoff_scalar_in_scalar_out():
    """Scalar input gives a float."""
    assert isinstance(smooth_cutoff(0.5, 0.2), float)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.05, 0.95),
    st.floats(0.0, 1.5),
    st.floats(0.0, 1.5),
)
def test_cutoff_range_and_monotonicity(eps, a, b):
    """beta takes values in [0, 1] and never increases."""
    lo, hi = min(a, b), max(a, b)
    v_lo, v_hi = smooth_cutoff(eps, lo), smooth_cutoff(eps, hi)
    assert 0.0 <= v_hi <= v_lo + 1e-12
    assert v_lo <= 1.0


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
def test_cutoff_rejects_bad_width(eps):
    """The transition width must lie strictly between 0 and 1."""
    with pytest.raises(InvalidParameterError):
        smooth_cutoff(eps, 0.5)


def test_kernel_spec_validation():
    """Unknown filters, small bandwidths and bad widths are rejected."""
    with pytest.raises(InvalidParameterError):
        KernelSpec("gaussian", 10)
    with pytest.raises(InvalidParameterError):
        KernelSpec.sharp(0.5)
    with pytest.raises(InvalidParameterError):
        KernelSpec.smooth(10, 0.0)
    assert KernelSpec.smooth(10, 0.2).at(20).L == 20.0


def test_filter_weights(torus):
    """Sharp weights are 1 inside E_L; Bochner-Riesz weights follow (1 - x)^N."""
    basis = eigenbasis(torus, 20)
    assert np.all(KernelSpec.sharp(20).weights(basis.frequencies) == 1.0)
    br = KernelSpec.bochner_riesz(20, 2).weights(basis.frequencies)
    assert np.allclose(br, (1 - basis.frequencies / 20) ** 2)


# Test reproduction
@pytest.mark.parametrize("spec", ["circle", "torus2", "sphere2", "product(torus2,circle)"])
def test_reproduce_matches_direct_evaluation(spec):
    """<f, K_L(z, .)> equals f(z) for 100 random f in E_L."""
    M = create_manifold(spec)
    L = 40 if spec != "product(torus2,circle)" else 15
    coeffs = random_coefficients(M, L, 100, seed=7)
    z = M.low_discrepancy_points(12, seed=1)
    direct = evaluate_function(M, L, coeffs, z)
    assert np.allclose(reproduce(M, coeffs, z, L=L), direct, atol=1e-9)


def test_reproduce_requires_spec_or_bandwidth(torus):
    """Without a kernel or a bandwidth there is nothing to reproduce with."""
    with pytest.raises(InvalidParameterError):
        reproduce(torus, np.ones(5), torus.base_point)


def test_reproduce_checks_coefficient_count(torus):
    """The coefficient vector must match k_L."""
    with pytest.raises(InvalidParameterError):
        reproduce(torus, np.ones(4), torus.base_point, L=7)


def test_smooth_kernel_reproduces_filtered_function(torus):
    """<f, B(z, .)> is the filtered function evaluated at z."""
    L = 20
    spec = KernelSpec.smooth(L, 0.3)
    basis = eigenbasis(torus, L)
    coeffs = random_coefficients(torus, L, 1, seed=3)[:, 0]
    z = torus.low_discrepancy_points(5)
    filtered = evaluate_function(torus, L, apply_filter(spec, basis, coeffs), z)
    assert np.allclose(reproduce(torus, coeffs, z, spec=spec), filtered, atol=1e-10)


# Test kernel matrices and the diagonal
def test_kernel_matrix_symmetric_psd(sphere):
    """The Gram matrix of the reproducing kernel is symmetric positive semidefinite."""
    Z = sphere.low_discrepancy_points(30)
    G = kernel_matrix(sphere, KernelSpec.sharp(6), Z)
    assert np.array_equal(G, G.T)
    assert np.linalg.eigvalsh(G).min() > -1e-10


def test_kernel_value_symmetric(torus):
    """B(z, w) = B(w, z) exactly."""
    spec = KernelSpec.bochner_riesz(15, 3)
    z, w = np.array([0.1, 0.2]), np.array([0.7, 0.45])
    assert kernel_value(torus, spec, z, w) == kernel_value(torus, spec, w, z)


def test_kernel_diagonal_matches_matrix(torus):
    """The diagonal helper agrees with the Gram matrix diagonal."""
    spec = KernelSpec.smooth_squared(12, 0.4)
    Z = torus.low_discrepancy_points(9)
    assert np.allclose(kernel_diagonal(torus, spec, Z), np.diag(kernel_matrix(torus, spec, Z)))


@pytest.mark.parametrize("M", [Torus2(), Sphere2(), Circle()])
def test_diagonal_ratio_is_one_on_homogeneous_spaces(M):
    """K_L(z, z) vol(M) / k_L = 1 everywhere on a homogeneous manifold."""
    z = M.low_discrepancy_points(20, seed=5)
    assert np.allclose(diagonal_ratio(M, 30, z), 1.0, atol=1e-9)


def test_kernel_l1_mass_at_least_one(torus):
    """The smooth kernel integrates to 1 against constants, so its L1 mass is at least 1."""
    mass = kernel_l1_mass(torus, KernelSpec.smooth(20, 0.3), torus.base_point)
    assert mass >= 1.0 - 1e-9


def test_filter_never_increases_norm(sphere):
    """Applying any filter shrinks coefficient norms."""
    basis = eigenbasis(sphere, 10)
    coeffs = random_coefficients(sphere, 10, 1, seed=2)[:, 0]
    for spec in (KernelSpec.smooth(10, 0.5), KernelSpec.bochner_riesz(10, 1), KernelSpec.sharp(10)):
        assert filter_norm_ratio(spec, basis, coeffs) <= 1.0 + 1e-12
    assert filter_norm_ratio(KernelSpec.sharp(10), basis, coeffs) == pytest.approx(1.0)
    assert filter_norm_ratio(KernelSpec.sharp(10), basis, np.zeros(len(basis))) == 0.0


# Test off-diagonal decay
def test_smooth_kernel_decay_constant_stable(torus):
    """For the smooth filter the fitted C_3 varies by at most a factor 4 across L."""
    fit = decay_fit(torus, KernelSpec.smooth(20, 0.3), [20, 40, 80], order=3)
    assert set(fit.per_level) == {20.0, 40.0, 80.0}
    assert fit.spread <= 4.0
    d, values = fit.profiles[40.0]
    assert np.all(np.diff(d) >= 0)
    assert len(values) == len(d)


def test_sharp_kernel_decays_worse_than_smooth(torus):
    """The sharp kernel's fitted constant spreads more than the smooth kernel's."""
    smooth = decay_fit(torus, KernelSpec.smooth(20, 0.3), [20, 40, 80], order=3)
    sharp = decay_fit(torus, KernelSpec.sharp(20), [20, 40, 80], order=3)
    assert sharp.spread > smooth.spread


def test_decay_fit_preconditions(torus):
    """Smooth filters need N >= m and at least one bandwidth."""
    with pytest.raises(InvalidParameterError):
        decay_fit(torus, KernelSpec.smooth(20, 0.3), [20], order=1)
    with pytest.raises(InvalidParameterError):
        decay_fit(torus, KernelSpec.smooth(20, 0.3), [], order=3)


# Test the Bernstein ratio
def test_gradient_ratio_single_mode(torus):
    """For sqrt(2) cos(2 pi x) the ratio is 2 pi / L up to probe resolution."""
    L = 10
    basis = eigenbasis(torus, L)
    index = next(m.index for m in basis.modes if m.descriptor == (1, 0, 1))
    coeffs = np.zeros(len(basis))
    coeffs[index] = 1.0
    assert gradient_ratio(torus, L, coeffs) == pytest.approx(2 * math.pi / L, rel=0.01)


def test_gradient_ratio_of_zero_function(torus):
    """A function vanishing on the probes gets ratio 0."""
    assert gradient_ratio(torus, 10, np.zeros(len(eigenbasis(torus, 10)))) == 0.0


@pytest.mark.parametrize("L", [20, 40])
def test_bernstein_bound(torus, L):
    """||grad f|| <= L ||f|| for random f in E_L, up to 5%."""
    assert bernstein_ratio(torus, L, trials=10, seed=42) <= 1.05


def test_bernstein_bound_on_sphere(sphere):
    """The Bernstein ratio stays bounded on the sphere."""
    assert bernstein_ratio(sphere, 12, trials=5, seed=1) <= 1.05


def test_bernstein_rejects_zero_trials(torus):
    """At least one trial is needed."""
    with pytest.raises(InvalidParameterError):
        bernstein_ratio(torus, 10, trials=0)
