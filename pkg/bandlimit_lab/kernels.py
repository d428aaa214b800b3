"""
Spectral kernels on E_L.

A kernel is a spectral filter h applied to the eigenbasis:

    B(z, w) = Σ_i h(λ_i / L) φ_i(z) φ_i(w)

with h = 1 (reproducing kernel K_L), h = (1 - x)^N (Bochner-Riesz S^N_L),
h = β_ε (smooth cutoff B^ε_L) or h = β_ε² (B̃^ε_L). This module evaluates
kernels, checks their diagonal and off-diagonal behaviour, and measures the
Bernstein gradient ratio of band-limited functions.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .manifold import (
    EigenBasis,
    SpectralManifold,
    eigenbasis,
    evaluate_basis,
    global_quadrature,
)
from .utils import InvalidParameterError

logger = logging.getLogger(__name__)

FILTERS = ("sharp", "bochner_riesz", "smooth", "smooth_squared")
FD_STEP = 1e-5
_PROBE_CHUNK = 4096


def _sigma(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_cutoff(eps: float, x):
    """
    C∞ cutoff β_ε: 1 on [0, 1-ε], 0 on [1, ∞), strictly decreasing between.

    Built from the smoothstep s(t) = σ(t) / (σ(t) + σ(1-t)), σ(t) = exp(-1/t),
    as β_ε(x) = s((1 - x) / ε).

    Args:
        eps: Transition width, 0 < eps < 1
        x: Scalar or array of nonnegative arguments

    Returns:
        Values in [0, 1] with the shape of x
    """
    if not 0.0 < eps < 1.0:
        raise InvalidParameterError(f"cutoff width must lie in (0, 1), got {eps}")
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    t = (1.0 - arr) / eps
    a = _sigma(t)
    b = _sigma(1.0 - t)
    out = a / (a + b)
    if np.ndim(x) == 0:
        return float(out[0])
    return out.reshape(np.shape(x))


@dataclass(frozen=True)
class KernelSpec:
    """Which spectral filter defines a kernel, and at which bandwidth."""

    filter: str
    L: float
    order: int = 0
    eps: float = 0.0

    def __post_init__(self):
        if self.filter not in FILTERS:
            raise InvalidParameterError(f"unknown kernel filter {self.filter!r}; choose from {FILTERS}")
        if not self.L >= 1:
            raise InvalidParameterError(f"bandwidth must be at least 1, got {self.L}")
        if self.filter == "bochner_riesz" and self.order < 0:
            raise InvalidParameterError(f"Bochner-Riesz order must be nonnegative, got {self.order}")
        if self.filter in ("smooth", "smooth_squared") and not 0.0 < self.eps < 1.0:
            raise InvalidParameterError(f"smooth filters need 0 < eps < 1, got {self.eps}")

    @classmethod
    def sharp(cls, L: float) -> "KernelSpec":
        return cls("sharp", L)

    @classmethod
    def bochner_riesz(cls, L: float, order: int) -> "KernelSpec":
        # order 0 is the reproducing kernel itself
        return cls("bochner_riesz", L, order=order)

    @classmethod
    def smooth(cls, L: float, eps: float) -> "KernelSpec":
        return cls("smooth", L, eps=eps)

    @classmethod
    def smooth_squared(cls, L: float, eps: float) -> "KernelSpec":
        return cls("smooth_squared", L, eps=eps)

    @property
    def is_smooth(self) -> bool:
        return self.filter in ("smooth", "smooth_squared")

    def at(self, L: float) -> "KernelSpec":
        """Same filter at another bandwidth."""
        return dataclasses.replace(self, L=float(L))

    def weights(self, frequencies: np.ndarray) -> np.ndarray:
        """Filter values h(λ/L); modes beyond L get 0."""
        x = np.asarray(frequencies, dtype=float) / self.L
        inside = x <= 1.0 + 1e-12
        if self.filter == "sharp":
            h = np.ones_like(x)
        elif self.filter == "bochner_riesz":
            h = np.clip(1.0 - x, 0.0, None) ** self.order
        elif self.filter == "smooth":
            h = smooth_cutoff(self.eps, x)
        else:
            h = smooth_cutoff(self.eps, x) ** 2
        return np.where(inside, h, 0.0)

    def describe(self) -> str:
        if self.filter == "bochner_riesz":
            return f"bochner_riesz(N={self.order})"
        if self.is_smooth:
            return f"{self.filter}(eps={self.eps})"
        return "sharp"


@dataclass(frozen=True)
class DecayFit:
    """Fitted off-diagonal decay constants C_N(L) and their spread over L."""

    filter: str
    order: int
    per_level: Dict[float, float]
    constant: float
    spread: float
    profiles: Dict[float, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict, compare=False, repr=False)


def _basis_and_weights(M: SpectralManifold, spec: KernelSpec) -> Tuple[EigenBasis, np.ndarray]:
    basis = eigenbasis(M, spec.L)
    return basis, spec.weights(basis.frequencies)


def kernel_value(M: SpectralManifold, spec: KernelSpec, z: np.ndarray, w: np.ndarray) -> float:
    """B(z, w), exactly symmetric in (z, w)."""
    basis, h = _basis_and_weights(M, spec)
    phi_z = evaluate_basis(M, basis, z)[0]
    phi_w = evaluate_basis(M, basis, w)[0]
    return float(np.dot(h, phi_z * phi_w))


def kernel_matrix(M: SpectralManifold, spec: KernelSpec, Z: np.ndarray, W: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Matrix B[j, k] = B(Z_j, W_k).

    With W omitted the Gram matrix of Z is returned, symmetrized.
    """
    basis, h = _basis_and_weights(M, spec)
    phi_z = evaluate_basis(M, basis, Z)
    if W is None:
        gram = (phi_z * h) @ phi_z.T
        return 0.5 * (gram + gram.T)
    phi_w = evaluate_basis(M, basis, W)
    return (phi_z * h) @ phi_w.T


def kernel_diagonal(M: SpectralManifold, spec: KernelSpec, Z: np.ndarray) -> np.ndarray:
    basis, h = _basis_and_weights(M, spec)
    phi = evaluate_basis(M, basis, Z)
    return (phi * phi) @ h


def evaluate_function(M: SpectralManifold, L: float, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Direct evaluation Σ_i c_i φ_i at points; coefficient columns give several functions."""
    basis = eigenbasis(M, L)
    return evaluate_basis(M, basis, points) @ np.asarray(coeffs, dtype=float)


def reproduce(
    M: SpectralManifold,
    coeffs: np.ndarray,
    z: np.ndarray,
    spec: Optional[KernelSpec] = None,
    L: Optional[float] = None,
) -> np.ndarray:
    """
    ⟨f, B(z, ·)⟩ by exact global quadrature, f given by its coefficients.

    For the sharp kernel this reproduces f(z).
    """
    if spec is None:
        if L is None:
            raise InvalidParameterError("reproduce needs a kernel spec or a bandwidth")
        spec = KernelSpec.sharp(L)
    basis, h = _basis_and_weights(M, spec)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[0] != len(basis):
        raise InvalidParameterError(f"expected {len(basis)} coefficients, got {coeffs.shape[0]}")
    rule = global_quadrature(M, spec.L)
    phi_nodes = evaluate_basis(M, basis, rule.nodes)
    f_nodes = phi_nodes @ coeffs
    kernel = (evaluate_basis(M, basis, z) * h) @ phi_nodes.T
    return kernel @ (rule.weights[:, None] * f_nodes.reshape(len(rule), -1)).reshape(f_nodes.shape)


def apply_filter(spec: KernelSpec, basis: EigenBasis, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of B(g) for g = Σ c_i φ_i: the filter acts diagonally."""
    h = spec.weights(basis.frequencies)
    coeffs = np.asarray(coeffs, dtype=float)
    return h.reshape((-1,) + (1,) * (coeffs.ndim - 1)) * coeffs


def diagonal_ratio(M: SpectralManifold, L: float, z: np.ndarray) -> np.ndarray:
    """K_L(z, z) vol(M) / k_L at each point; identically 1 on homogeneous manifolds."""
    basis = eigenbasis(M, L)
    return kernel_diagonal(M, KernelSpec.sharp(L), z) * M.total_volume / len(basis)


def kernel_l1_mass(M: SpectralManifold, spec: KernelSpec, z: np.ndarray, oversample: float = 8.0) -> float:
    """∫ |B(z, ·)| dV on a global rule oversampled relative to the bandwidth."""
    rule = global_quadrature(M, oversample * spec.L)
    values = kernel_matrix(M, spec, z, rule.nodes)[0]
    return float(rule.weights @ np.abs(values))


def decay_fit(
    M: SpectralManifold,
    spec: KernelSpec,
    L_list: Sequence[float],
    order: int,
    n_probe: int = 256,
) -> DecayFit:
    """
    Fit C_N(L) = max |B(z, w)| (1 + L d(z, w))^N / L^m over a probe set.

    Probes run from the base point along fixed geodesics out to the diameter,
    so the set is deterministic.

    Raises:
        InvalidParameterError: If N < m for a smooth filter or L_list is empty
    """
    if not L_list:
        raise InvalidParameterError("decay_fit needs at least one bandwidth")
    if order < 0:
        raise InvalidParameterError(f"decay exponent must be nonnegative, got {order}")
    if spec.is_smooth and order < M.dimension:
        raise InvalidParameterError(f"smooth filters need N >= m = {M.dimension}, got {order}")

    z0 = M.base_point
    probes = M.distance_probe(n_probe)
    d = M.paired_distances(z0[None, :], probes)
    m = M.dimension

    per_level: Dict[float, float] = {}
    profiles: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
    for L in L_list:
        level_spec = spec.at(L)
        values = kernel_matrix(M, level_spec, z0, probes)[0]
        ratio = np.abs(values) * (1.0 + L * d) ** order / L ** m
        per_level[float(L)] = float(ratio.max())
        order_idx = np.argsort(d, kind="stable")
        profiles[float(L)] = (d[order_idx], values[order_idx])
        logger.debug(f"decay {level_spec.describe()} L={L}: C_N={per_level[float(L)]:.6g}")

    constants = np.array(list(per_level.values()))
    return DecayFit(
        filter=spec.describe(),
        order=order,
        per_level=per_level,
        constant=float(constants.max()),
        spread=float(constants.max() / constants.min()),
        profiles=profiles,
    )


def gradient_ratio(
    M: SpectralManifold,
    L: float,
    coeffs: np.ndarray,
    probes: Optional[np.ndarray] = None,
    step: float = FD_STEP,
) -> np.ndarray:
    """
    ‖∇f‖∞ / (L ‖f‖∞) for each coefficient column, sup-norms over the probes.

    Gradients use central differences in the chart with the inverse metric.
    A function vanishing on the probes gets ratio 0.
    """
    basis = eigenbasis(M, L)
    coeffs = np.asarray(coeffs, dtype=float)
    single = coeffs.ndim == 1
    C = coeffs[:, None] if single else coeffs
    if probes is None:
        probes = M.probe_grid(1.0 / (3.0 * L))

    sup_f = np.zeros(C.shape[1])
    sup_grad = np.zeros(C.shape[1])
    for start in range(0, len(probes), _PROBE_CHUNK):
        chunk = probes[start:start + _PROBE_CHUNK]
        values = evaluate_basis(M, basis, chunk) @ C
        sup_f = np.maximum(sup_f, np.abs(values).max(axis=0))
        g_inv = M.metric_inverse_diag(chunk)
        grad_sq = np.zeros_like(values)
        for axis in range(M.chart_dim):
            shift = np.zeros(M.chart_dim)
            shift[axis] = step
            forward = evaluate_basis(M, basis, chunk + shift) @ C
            backward = evaluate_basis(M, basis, chunk - shift) @ C
            partial = (forward - backward) / (2.0 * step)
            grad_sq += g_inv[:, axis:axis + 1] * partial * partial
        sup_grad = np.maximum(sup_grad, np.sqrt(grad_sq).max(axis=0))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sup_f > 0, sup_grad / (L * sup_f), 0.0)
    return float(ratio[0]) if single else ratio


def bernstein_ratio(M: SpectralManifold, L: float, trials: int, seed: int = 42) -> float:
    """Largest gradient ratio over random Gaussian f ∈ E_L."""
    if trials < 1:
        raise InvalidParameterError(f"trials must be at least 1, got {trials}")
    basis = eigenbasis(M, L)
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((len(basis), trials))
    ratios = gradient_ratio(M, L, coeffs)
    best = float(np.max(ratios))
    logger.info(f"Bernstein ratio on {M.name} L={L} over {trials} trials: {best:.6f}")
    return best


def random_coefficients(M: SpectralManifold, L: float, count: int, seed: int) -> np.ndarray:
    """Gaussian coefficient columns for ``count`` random functions in E_L."""
    basis = eigenbasis(M, L)
    return np.random.default_rng(seed).standard_normal((len(basis), count))


def filter_norm_ratio(spec: KernelSpec, basis: EigenBasis, coeffs: np.ndarray) -> float:
    """‖B(g)‖₂ / ‖g‖₂ in coefficient space; at most 1 since h ∈ [0, 1]."""
    norm = math.sqrt(float(np.sum(np.asarray(coeffs) ** 2)))
    if norm == 0.0:
        return 0.0
    return math.sqrt(float(np.sum(apply_filter(spec, basis, coeffs) ** 2))) / norm
