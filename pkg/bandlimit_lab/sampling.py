"""
Sampling and interpolation bounds for families on E_L.

For a point set Z(L) this module computes:
- Marcinkiewicz-Zygmund frame bounds A(L), B(L) of the normalized sampling form
- Riesz bounds a(L), b(L) of the normalized reproducing-kernel Gram matrix
- The Plancherel-Pólya constant (the upper frame bound)
- Minimal-norm interpolants in E_L

All inf/sup over E_L are eigenvalue problems in the eigenbasis coordinates;
random Rayleigh quotients are kept only as a cross-check.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from .families import TriangularFamily, level_points, mesh_constant, separation_constant
from .kernels import KernelSpec, kernel_matrix
from .manifold import SpectralManifold, eigenbasis, evaluate_basis, minimum_separation
from .utils import InvalidParameterError, SingularConfigurationError

logger = logging.getLogger(__name__)

PIVOT_TOLERANCE = 1e-10
DEFAULT_MZ_FACTOR = 10.0
DEFAULT_RIESZ_THRESHOLD = 0.1

Points = Union[TriangularFamily, np.ndarray]


@dataclass(frozen=True)
class FrameBounds:
    L: float
    k_L: int
    m_L: int
    A: float
    B: float

    @property
    def condition(self) -> float:
        """B/A, infinite when A vanishes."""
        return self.B / self.A if self.A > 0 else math.inf


@dataclass(frozen=True)
class RieszBounds:
    L: float
    m_L: int
    a: float
    b: float


@dataclass(frozen=True, eq=False)
class Interpolant:
    """
    f = Σ_j c_j K_L(·, z_j) together with its eigenbasis coefficients.

    ``residual`` is the max-norm misfit at the nodes; ``degenerate`` marks a
    pseudo-inverse solve.
    """

    manifold: SpectralManifold
    L: float
    nodes: np.ndarray
    coefficients: np.ndarray
    basis_coefficients: np.ndarray
    residual: float
    norm_sq: float
    degenerate: bool

    def __call__(self, points: np.ndarray) -> np.ndarray:
        basis = eigenbasis(self.manifold, self.L)
        return evaluate_basis(self.manifold, basis, points) @ self.basis_coefficients


def _symmetric_extremes(matrix: np.ndarray) -> Tuple[float, float]:
    eig = linalg.eigvalsh(0.5 * (matrix + matrix.T))
    return float(eig[0]), float(eig[-1])


def frame_bounds(M: SpectralManifold, Z: Points, L: float) -> FrameBounds:
    """
    Extreme eigenvalues of G = (1/k_L) Φᵀ Φ with Φ[j, i] = φ_i(z_j).

    They equal the inf and sup over f ∈ E_L of (1/k_L) Σ_j |f(z_j)|² / ‖f‖².
    """
    pts = level_points(Z, L, M)
    if len(pts) == 0:
        raise InvalidParameterError(f"frame bounds need at least one point at L={L}")
    basis = eigenbasis(M, L)
    phi = evaluate_basis(M, basis, pts)
    A, B = _symmetric_extremes(phi.T @ phi / len(basis))
    # rank deficiency shows up as roundoff below zero
    A = max(A, 0.0)
    logger.debug(f"frame bounds {M.name} L={L} m_L={len(pts)} k_L={len(basis)}: A={A:.6g} B={B:.6g}")
    return FrameBounds(L=float(L), k_L=len(basis), m_L=len(pts), A=A, B=B)


def normalized_gram(M: SpectralManifold, pts: np.ndarray, L: float) -> np.ndarray:
    """G̃[j, k] = K_L(z_j, z_k) / sqrt(K_L(z_j, z_j) K_L(z_k, z_k)), unit diagonal."""
    gram = kernel_matrix(M, KernelSpec.sharp(L), pts)
    scale = 1.0 / np.sqrt(np.diag(gram))
    normalized = gram * scale[:, None] * scale[None, :]
    np.fill_diagonal(normalized, 1.0)
    return normalized


def riesz_bounds(M: SpectralManifold, Z: Points, L: float) -> RieszBounds:
    """
    Extreme eigenvalues of the normalized kernel Gram matrix of Z(L).

    Raises:
        SingularConfigurationError: If Z(L) contains duplicate points
    """
    pts = level_points(Z, L, M)
    if len(pts) == 0:
        raise InvalidParameterError(f"riesz bounds need at least one point at L={L}")
    if minimum_separation(M, pts) <= 0.0:
        raise SingularConfigurationError(f"duplicate points at L={L} make the kernel Gram matrix singular")
    k_L = len(eigenbasis(M, L))
    if len(pts) > k_L:
        logger.warning(f"riesz bounds at L={L}: m_L={len(pts)} exceeds k_L={k_L}, lower bound will vanish")
    a, b = _symmetric_extremes(normalized_gram(M, pts, L))
    return RieszBounds(L=float(L), m_L=len(pts), a=max(a, 0.0), b=b)


def plancherel_polya_bound(M: SpectralManifold, Z: Points, L: float) -> float:
    """Optimal constant C in (1/k_L) Σ |f(z_j)|² ≤ C ‖f‖², i.e. B(L)."""
    return frame_bounds(M, Z, L).B


def min_norm_interpolant(
    M: SpectralManifold,
    Z: Points,
    L: float,
    values: np.ndarray,
    tolerance: float = PIVOT_TOLERANCE,
) -> Interpolant:
    """
    Minimal-norm f ∈ E_L with f(z_j) = values_j.

    Solves G c = values with G the kernel Gram matrix by Cholesky when the
    pivots stay above ``tolerance`` relative to the largest, otherwise by a
    truncated spectral pseudo-inverse. Degeneracy is reported, not raised.

    Raises:
        InvalidParameterError: If the number of values differs from m_L
    """
    pts = level_points(Z, L, M)
    values = np.asarray(values, dtype=float)
    if values.shape != (len(pts),):
        raise InvalidParameterError(f"expected {len(pts)} values, got shape {values.shape}")

    basis = eigenbasis(M, L)
    phi = evaluate_basis(M, basis, pts)
    gram = phi @ phi.T
    gram = 0.5 * (gram + gram.T)

    degenerate = False
    try:
        factor, lower = linalg.cho_factor(gram, lower=True)
        pivots = np.diag(factor) ** 2
        if pivots.min() < tolerance * pivots.max():
            raise linalg.LinAlgError("relative pivot below tolerance")
        coefficients = linalg.cho_solve((factor, lower), values)
    except linalg.LinAlgError as e:
        degenerate = True
        w, V = linalg.eigh(gram)
        keep = w > tolerance * max(float(w[-1]), 0.0)
        coefficients = V[:, keep] @ ((V[:, keep].T @ values) / w[keep])
        logger.warning(f"interpolation at L={L} is degenerate ({e}); using truncated pseudo-inverse")

    beta = phi.T @ coefficients
    residual = float(np.max(np.abs(phi @ beta - values))) if len(values) else 0.0
    return Interpolant(
        manifold=M,
        L=float(L),
        nodes=pts,
        coefficients=coefficients,
        basis_coefficients=beta,
        residual=residual,
        norm_sq=float(beta @ beta),
        degenerate=degenerate,
    )


def random_rayleigh_bounds(
    M: SpectralManifold, Z: Points, L: float, trials: int = 1000, seed: int = 42
) -> Tuple[float, float]:
    """Min and max of the normalized sampling quotient over random Gaussian f ∈ E_L."""
    if trials < 1:
        raise InvalidParameterError(f"trials must be at least 1, got {trials}")
    pts = level_points(Z, L, M)
    basis = eigenbasis(M, L)
    coeffs = np.random.default_rng(seed).standard_normal((len(basis), trials))
    samples = evaluate_basis(M, basis, pts) @ coeffs
    quotient = np.sum(samples * samples, axis=0) / len(basis) / np.sum(coeffs * coeffs, axis=0)
    return float(quotient.min()), float(quotient.max())


def is_empirically_mz(frames: Sequence[FrameBounds], factor: float = DEFAULT_MZ_FACTOR) -> bool:
    """
    Finite-grid surrogate of the M-Z property.

    Every level needs A > 0, and the condition numbers B/A may vary by less
    than ``factor`` across the grid.
    """
    if not frames:
        return False
    if any(f.A <= 0 for f in frames):
        return False
    conditions = [f.condition for f in frames]
    return max(conditions) / min(conditions) < factor


def is_empirically_interpolating(bounds: Sequence[RieszBounds], threshold: float = DEFAULT_RIESZ_THRESHOLD) -> bool:
    """Finite-grid surrogate of the interpolating property: a(L) ≥ threshold at every level."""
    return bool(bounds) and all(b.a >= threshold for b in bounds)


def sampling_rows(M: SpectralManifold, Z: TriangularFamily, L_list: Optional[Sequence[float]] = None):
    """
    One summary row per level: frame bounds, Riesz bounds and separation.

    Riesz columns are left non-finite for levels with duplicate points.
    """
    rows = []
    for L in (L_list or Z.bandwidths):
        pts = Z[L]
        frame = frame_bounds(M, pts, L)
        try:
            riesz: Optional[RieszBounds] = riesz_bounds(M, pts, L)
        except SingularConfigurationError as e:
            logger.warning(f"skipping Riesz bounds at L={L}: {e}")
            riesz = None
        rows.append(
            {
                "L": float(L),
                "k_L": frame.k_L,
                "m_L": frame.m_L,
                "A": frame.A,
                "B": frame.B,
                "B_over_A": frame.condition,
                "a": riesz.a if riesz else math.nan,
                "b": riesz.b if riesz else math.nan,
                "s": separation_constant(M, pts, L),
                "eta": mesh_constant(M, pts, L),
            }
        )
    return rows
