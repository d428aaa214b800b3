"""
Concentration operators over geodesic balls.

The classical operator restricts f ∈ E_L to a ball A and projects back:
its matrix in the eigenbasis is D_L[i, k] = ∫_A φ_i φ_k. The modified
operator wraps it in the smooth filter, T = β D β with β_i = β_ε(λ_i/L).
This module assembles both, computes spectra with the trace-based counting
bounds, cross-checks the traces against kernel integrals, and scans the
Landau plateau over (L, R) grids.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .families import TriangularFamily, separation_constant
from .kernels import KernelSpec, kernel_diagonal, smooth_cutoff
from .manifold import (
    DEFAULT_BALL_RESOLUTION,
    QuadratureRule,
    SpectralManifold,
    _as_points,
    ball_quadrature,
    ball_volume,
    eigenbasis,
    evaluate_basis,
    global_quadrature,
)
from .utils import InvalidParameterError, NumericalIntegrityError

logger = logging.getLogger(__name__)

EIGENVALUE_TOLERANCE = 1e-8
DEFAULT_GAMMAS: Tuple[float, ...] = (0.1, 0.5, 0.9)
DEFAULT_RHO = 0.2
REDUCED_RESOLUTION: Tuple[int, int] = (32, 64)


@dataclass(frozen=True, eq=False)
class ConcentrationSpectrum:
    """
    Eigenvalues (descending) of a concentration matrix with trace data.

    ``counts_above`` maps γ to #{λ > γ}, ``counts_at_least`` maps δ to
    #{λ ≥ δ}. For spectra in [0, 1] the traces bound these counts:
    #{λ > γ} ≥ T₁ − (T₁ − T₂)/(1 − γ) and #{λ ≥ δ} ≤ T₁ + (T₁ − T₂)/δ.
    """

    eigenvalues: np.ndarray
    T1: float
    T2: float
    counts_above: Dict[float, int]
    counts_at_least: Dict[float, int]
    L: Optional[float] = None
    eps: float = 0.0
    center: Optional[np.ndarray] = None
    radius: Optional[float] = None

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def trace_lower_bound(self, gamma: float) -> float:
        return self.T1 - (self.T1 - self.T2) / (1.0 - gamma)

    def trace_upper_bound(self, delta: float) -> float:
        return self.T1 + (self.T1 - self.T2) / delta


@dataclass(frozen=True)
class TraceIdentities:
    T1_matrix: float
    T1_kernel: float
    T2_matrix: float
    T2_kernel: float

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.T1_matrix, self.T1_kernel, self.T2_matrix, self.T2_kernel)


@dataclass(frozen=True)
class PlateauRow:
    L: float
    R: float
    eps: float
    radius: float
    T1: float
    T2: float
    trace_ratio: float
    counts_above: Dict[float, int]
    dilated_counts: Dict[float, int]
    N_L: Optional[int] = None
    n_L: Optional[int] = None
    t: Optional[float] = None

    @property
    def T1_minus_T2(self) -> float:
        return self.T1 - self.T2


@dataclass(frozen=True)
class PlateauReport:
    """
    Scan over (L, R) with fitted growth of T₁ − T₂ against R^{m−1}.

    ``exponents[L]`` is the log-log slope of T₁ − T₂ in R and
    ``spreads[L]`` the max/min ratio of (T₁ − T₂)/R^{m−1} over the R grid.
    """

    rows: Tuple[PlateauRow, ...]
    dimension: int
    center: np.ndarray = field(compare=False)
    rho: float = DEFAULT_RHO
    exponents: Dict[float, float] = field(default_factory=dict)
    spreads: Dict[float, float] = field(default_factory=dict)

    def row(self, L: float, R: float) -> PlateauRow:
        for row in self.rows:
            if row.L == float(L) and row.R == float(R):
                return row
        raise KeyError(f"no plateau row for L={L}, R={R}")


def _region_rule(
    M: SpectralManifold,
    L: float,
    center: Optional[np.ndarray],
    radius: Optional[float],
    resolution: Tuple[int, int],
) -> QuadratureRule:
    if radius is None:
        return global_quadrature(M, L)
    if center is None:
        center = M.base_point
    return ball_quadrature(M, center, radius, resolution)


def _mirror_upper(matrix: np.ndarray) -> np.ndarray:
    upper = np.triu(matrix)
    return upper + np.triu(matrix, 1).T


def classical_matrix(
    M: SpectralManifold,
    L: float,
    center: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
) -> np.ndarray:
    """
    D_L[i, k] = ∫_A φ_i φ_k for A = B(center, radius), or A = M when radius is None.

    The upper triangle is computed and mirrored, so the result is exactly symmetric.
    """
    basis = eigenbasis(M, L)
    rule = _region_rule(M, L, center, radius, resolution)
    phi = evaluate_basis(M, basis, rule.nodes)
    return _mirror_upper(phi.T @ (rule.weights[:, None] * phi))


def filter_vector(M: SpectralManifold, L: float, eps: float) -> np.ndarray:
    """β_ε(λ_i/L) over the basis of E_L; all ones for ε = 0."""
    basis = eigenbasis(M, L)
    if eps == 0:
        return np.ones(len(basis))
    return smooth_cutoff(eps, basis.frequencies / L)


def modified_matrix(
    M: SpectralManifold,
    L: float,
    eps: float,
    center: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
) -> np.ndarray:
    """
    Matrix of T f = B^ε_L(χ_A B^ε_L f): T[i, k] = β_i D_L[i, k] β_k.

    ε = 0 gives the classical matrix.

    Raises:
        InvalidParameterError: If ε is outside [0, 1)
    """
    if not 0 <= eps < 1:
        raise InvalidParameterError(f"eps must lie in [0, 1), got {eps}")
    D = classical_matrix(M, L, center, radius, resolution)
    if eps == 0:
        return D
    beta = filter_vector(M, L, eps)
    return _mirror_upper(beta[:, None] * D * beta[None, :])


def spectrum(
    matrix: np.ndarray,
    gammas: Sequence[float] = DEFAULT_GAMMAS,
    deltas: Optional[Sequence[float]] = None,
    L: Optional[float] = None,
    eps: float = 0.0,
    center: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
) -> ConcentrationSpectrum:
    """
    Full symmetric eigendecomposition of a concentration matrix.

    Raw eigenvalues are kept; any outside [−1e-8, 1 + 1e-8] indicates a
    quadrature failure.

    Raises:
        InvalidParameterError: If the matrix is not square and symmetric
        NumericalIntegrityError: If an eigenvalue leaves the unit interval
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {matrix.shape}")
    if not np.array_equal(matrix, matrix.T):
        asym = float(np.max(np.abs(matrix - matrix.T)))
        if asym > 1e-12 * max(1.0, float(np.max(np.abs(matrix)))):
            raise InvalidParameterError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
        matrix = 0.5 * (matrix + matrix.T)

    eigenvalues = linalg.eigvalsh(matrix)[::-1].copy()
    if len(eigenvalues) and (
        eigenvalues[-1] < -EIGENVALUE_TOLERANCE or eigenvalues[0] > 1.0 + EIGENVALUE_TOLERANCE
    ):
        raise NumericalIntegrityError(
            f"concentration eigenvalues span [{eigenvalues[-1]:.3e}, {eigenvalues[0]:.3e}], outside [0, 1]"
        )
    deltas = gammas if deltas is None else deltas
    eigenvalues.setflags(write=False)
    return ConcentrationSpectrum(
        eigenvalues=eigenvalues,
        T1=float(np.trace(matrix)),
        T2=float(np.sum(matrix * matrix)),
        counts_above={float(g): int(np.sum(eigenvalues > g)) for g in gammas},
        counts_at_least={float(d): int(np.sum(eigenvalues >= d)) for d in deltas},
        L=L,
        eps=eps,
        center=center,
        radius=radius,
    )


def concentration_spectrum(
    M: SpectralManifold,
    L: float,
    eps: float,
    center: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
    gammas: Sequence[float] = DEFAULT_GAMMAS,
    deltas: Optional[Sequence[float]] = None,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
) -> ConcentrationSpectrum:
    """Assemble the (modified) matrix over B(center, radius) and take its spectrum."""
    if center is None:
        center = M.base_point
    matrix = modified_matrix(M, L, eps, center, radius, resolution)
    return spectrum(matrix, gammas, deltas, L=L, eps=eps, center=center, radius=radius)


def _squared_spec(L: float, eps: float) -> KernelSpec:
    return KernelSpec.sharp(L) if eps == 0 else KernelSpec.smooth_squared(L, eps)


def trace_identities(
    M: SpectralManifold,
    L: float,
    eps: float,
    center: Optional[np.ndarray] = None,
    radius: Optional[float] = None,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
    reduced_resolution: Tuple[int, int] = REDUCED_RESOLUTION,
) -> TraceIdentities:
    """
    T₁ and T₂ of the modified operator, each from the matrix and from kernel integrals.

    Kernel side: T₁ = ∫_A B̃(z, z) and T₂ = ∬_{A×A} B̃(z, w)², with B̃ the
    β_ε² kernel; the double integral uses a reduced-resolution ball rule.
    """
    if center is None:
        center = M.base_point
    matrix = modified_matrix(M, L, eps, center, radius, resolution)
    spec = _squared_spec(L, eps)

    rule = _region_rule(M, L, center, radius, resolution)
    T1_kernel = float(rule.weights @ kernel_diagonal(M, spec, rule.nodes))

    reduced = rule if radius is None else _region_rule(M, L, center, radius, reduced_resolution)
    basis = eigenbasis(M, L)
    phi = evaluate_basis(M, basis, reduced.nodes)
    weighted = phi * spec.weights(basis.frequencies)
    # ∬ B̃² = tr((Φᵀ W Φ H)²) with H the filter diagonal
    small = weighted.T @ (reduced.weights[:, None] * phi)
    T2_kernel = float(np.sum(small * small.T))

    return TraceIdentities(
        T1_matrix=float(np.trace(matrix)),
        T1_kernel=T1_kernel,
        T2_matrix=float(np.sum(matrix * matrix)),
        T2_kernel=T2_kernel,
    )


def count_in_ball(M: SpectralManifold, points: np.ndarray, center: np.ndarray, radius: float) -> int:
    """#(points ∩ closed B(center, radius)); nonpositive radius counts nothing."""
    if radius <= 0:
        return 0
    pts = _as_points(points, M.chart_dim)
    d = M.paired_distances(pts, np.asarray(center, float)[None, :])
    return int(np.sum(d <= radius * (1.0 + 1e-12)))


def _annulus_width(M: SpectralManifold, family: TriangularFamily) -> float:
    s = min(separation_constant(M, family[L], L) for L in family)
    if s == 0:
        raise InvalidParameterError("family has duplicate points; pass the annulus width t explicitly")
    return 3.0 / s


def plateau_scan(
    M: SpectralManifold,
    L_list: Sequence[float],
    R_list: Sequence[float],
    eps: float,
    gammas: Sequence[float] = DEFAULT_GAMMAS,
    deltas: Optional[Sequence[float]] = None,
    family: Optional[TriangularFamily] = None,
    t: Optional[float] = None,
    rho: float = DEFAULT_RHO,
    center: Optional[np.ndarray] = None,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
) -> PlateauReport:
    """
    Spectra of the modified operator over B(ξ, R/L) across an (L, R) grid.

    Each row records the trace ratio T₁/(k_L vol(B)/vol(M)), T₁ − T₂ and
    #{λ > γ}; the dilated spectrum at bandwidth L(1+ρ) over the same ball
    gives #{λ ≥ δ}. With a family, N_L = #(Z(L) ∩ B(ξ, (R+t)/L)) and
    n_L = #(Z(L) ∩ B(ξ, (R−t)/L)) are recorded too; t defaults to 3/s.

    Raises:
        InvalidParameterError: If a grid is empty or ρ < 0
        RadiusTooLargeError: If some R/L is not an admissible radius
    """
    if not L_list or not R_list:
        raise InvalidParameterError("plateau scan needs nonempty L and R grids")
    if rho < 0:
        raise InvalidParameterError(f"rho must be nonnegative, got {rho}")
    if center is None:
        center = M.base_point
    center = _as_points(center, M.chart_dim)[0]
    deltas = gammas if deltas is None else deltas
    if family is not None and t is None:
        t = _annulus_width(M, family)

    rows: List[PlateauRow] = []
    for L in sorted(float(L) for L in L_list):
        k_L = len(eigenbasis(M, L))
        for R in sorted(float(R) for R in R_list):
            radius = R / L
            vol_fraction = ball_volume(M, center, radius) / M.total_volume
            spec = concentration_spectrum(M, L, eps, center, radius, gammas, deltas, resolution)
            dilated = concentration_spectrum(M, L * (1.0 + rho), eps, center, radius, gammas, deltas, resolution)
            N_L = n_L = None
            if family is not None:
                pts = family[L]
                N_L = count_in_ball(M, pts, center, (R + t) / L)
                n_L = count_in_ball(M, pts, center, (R - t) / L)
            row = PlateauRow(
                L=L,
                R=R,
                eps=eps,
                radius=radius,
                T1=spec.T1,
                T2=spec.T2,
                trace_ratio=spec.T1 / (k_L * vol_fraction),
                counts_above=spec.counts_above,
                dilated_counts=dilated.counts_at_least,
                N_L=N_L,
                n_L=n_L,
                t=t if family is not None else None,
            )
            logger.debug(
                f"plateau L={L} R={R}: ratio={row.trace_ratio:.6f} T1-T2={row.T1_minus_T2:.6g}"
            )
            rows.append(row)

    exponents, spreads = _fit_growth(rows, M.dimension)
    return PlateauReport(tuple(rows), M.dimension, center, rho, exponents, spreads)


def _fit_growth(rows: Sequence[PlateauRow], dimension: int) -> Tuple[Dict[float, float], Dict[float, float]]:
    exponents: Dict[float, float] = {}
    spreads: Dict[float, float] = {}
    for L in sorted({row.L for row in rows}):
        level = [row for row in rows if row.L == L and row.T1_minus_T2 > 0]
        if not level:
            continue
        scaled = np.array([row.T1_minus_T2 / row.R ** (dimension - 1) for row in level])
        spreads[L] = float(scaled.max() / scaled.min())
        if len(level) >= 2:
            logR = np.log([row.R for row in level])
            logD = np.log([row.T1_minus_T2 for row in level])
            exponents[L] = float(np.polyfit(logR, logD, 1)[0])
        else:
            exponents[L] = math.nan
    return exponents, spreads
