"""
Approximate Fekete points and their downstream properties.

Fekete points for E_L maximize |det V| with V[j, i] = φ_i(x_j) over k_L
points. This module provides:
- Greedy selection by column-pivoted QR, then local exchange (maxvol swaps),
  then exhaustive certification when the candidate set is tiny
- Lagrange functions l_i with l_i(x_j) = δ_ij
- The weighted kernel p(z, w) = B(z, w)/B(z, z) at bandwidth Lε/C and the
  weighted reconstruction formula built on it
- Dilated-family frame/Riesz checks, equidistribution, product admissibility
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, special

from .families import TriangularFamily, separation_constant
from .kernels import KernelSpec, kernel_diagonal, kernel_l1_mass, kernel_matrix, kernel_value
from .manifold import (
    SpectralManifold,
    Torus2,
    _as_points,
    ball_volume,
    eigenbasis,
    evaluate_basis,
    global_quadrature,
    pairwise_distances,
)
from .sampling import FrameBounds, RieszBounds, frame_bounds, riesz_bounds
from .utils import (
    BandwidthTooSmallError,
    EnlargeCandidatesError,
    InvalidParameterError,
    SingularConfigurationError,
)

logger = logging.getLogger(__name__)

DEFAULT_CANDIDATE_FACTOR = 4
DEFAULT_EXCHANGE_ROUNDS = 10
DEFAULT_EXHAUSTIVE_LIMIT = 250_000
SWAP_GAIN_TOLERANCE = 1e-10
RANK_TOLERANCE = 1e-12
DEFAULT_CUTOFF = 0.5
RESIDUAL_TOLERANCE = 1e-10
DEFAULT_C_GRID: Tuple[float, ...] = tuple(0.25 * i for i in range(13))
_EXHAUSTIVE_BATCH = 20_000
_PROBE_CHUNK = 4096
TORUS_PANEL_KAPPA = 3.0
TORUS_PANEL_DIRECTIONS: Tuple[Tuple[Tuple[int, int], Tuple[int, int]], ...] = (
    ((1, 0), (0, 1)),
    ((1, 1), (1, -1)),
    ((1, 0), (1, 1)),
    ((0, 1), (1, -1)),
)


@dataclass(frozen=True, eq=False)
class FeketeResult:
    """
    Approximate Fekete configuration for E_L.

    ``vandermonde`` has one row per node, V[j, i] = φ_i(x_j). ``history``
    lists log|det| after the greedy stage and after every accepted swap.
    ``lagrange_sup`` is max |l_i| over a probe grid of spacing 1/(2L) and
    the candidates; ``lagrange_sup_candidates`` only over the candidates.
    """

    manifold: SpectralManifold
    L: float
    nodes: np.ndarray
    node_indices: np.ndarray
    vandermonde: np.ndarray
    log_abs_det: float
    greedy_log_abs_det: float
    separation: float
    lagrange_sup: float
    lagrange_sup_candidates: float
    candidate_descriptor: str
    candidate_count: int
    exchange_passes: int
    swaps: int
    history: Tuple[float, ...]
    certified_optimal: bool

    @property
    def k_L(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class DilatedCheck:
    L: float
    L_plus: int
    L_minus: int
    frame: FrameBounds
    riesz: RieszBounds


@dataclass(frozen=True)
class EquidistRow:
    L: float
    m_L: int
    discrepancy: float
    moment_errors: Tuple[float, ...]
    mass_error: float


@dataclass(frozen=True)
class EquidistReport:
    rows: Tuple[EquidistRow, ...]
    function_names: Tuple[str, ...]
    cap_count: int

    def row(self, L: float) -> EquidistRow:
        for row in self.rows:
            if row.L == float(L):
                return row
        raise KeyError(f"no equidistribution row for L={L}")


@dataclass(frozen=True)
class CapPanel:
    centers: np.ndarray = field(compare=False)
    radii: Tuple[float, ...]


@dataclass(frozen=True)
class PanelFunction:
    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    mean: float = 0.0


@dataclass(frozen=True)
class AdmissibilityReport:
    """Smallest grid value C with E_L · E_{εL} ⊂ E_{L(1+Cε)} to residual tolerance."""

    L: float
    eps: float
    C: Optional[float]
    residuals: Dict[float, float]
    trials: int


def _log_abs_det(V: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(V)
    return float(logdet) if sign != 0 else -math.inf


def _lagrange_values(V: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Rows l(z)ᵀ = φ(z)ᵀ V⁻¹ for each row φ(z)ᵀ of phi."""
    lu = linalg.lu_factor(V)
    return linalg.lu_solve(lu, phi.T, trans=1).T


def _candidate_set(
    M: SpectralManifold,
    k_L: int,
    candidate_count: Optional[int],
    candidate_factor: int,
    seed: int,
    candidates: Optional[np.ndarray],
) -> Tuple[np.ndarray, str]:
    if candidates is not None:
        pts = M.canonicalize(_as_points(candidates, M.chart_dim))
        if len(pts) < k_L:
            raise InvalidParameterError(f"need at least k_L={k_L} candidates, got {len(pts)}")
        return pts, f"explicit(n={len(pts)})"
    count = candidate_count if candidate_count is not None else candidate_factor * k_L
    if count < DEFAULT_CANDIDATE_FACTOR * k_L:
        raise InvalidParameterError(
            f"candidate_count must be at least {DEFAULT_CANDIDATE_FACTOR}*k_L = {DEFAULT_CANDIDATE_FACTOR * k_L}, got {count}"
        )
    return M.low_discrepancy_points(count, seed), f"low-discrepancy(n={count}, seed={seed})"


def _greedy_select(phi: np.ndarray, k_L: int) -> np.ndarray:
    _, R, P = linalg.qr(phi.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[k_L - 1] <= RANK_TOLERANCE * diag[0]:
        rank = int(np.sum(diag > RANK_TOLERANCE * diag[0]))
        raise EnlargeCandidatesError(
            f"greedy selection found only {rank} independent rows of {k_L} among "
            f"{phi.shape[0]} candidates; enlarge the candidate set"
        )
    return np.array(P[:k_L], dtype=int)


def _exchange(
    phi: np.ndarray, selected: np.ndarray, rounds: int, history: List[float]
) -> Tuple[np.ndarray, int, int]:
    selected = selected.copy()
    passes = swaps = 0
    for _ in range(rounds):
        passes += 1
        V = phi[selected]
        W = _lagrange_values(V, phi)
        improved = False
        for p in range(len(selected)):
            column = np.abs(W[:, p])
            c = int(np.argmax(column))
            gain = math.log(column[c]) if column[c] > 0 else -math.inf
            if gain <= SWAP_GAIN_TOLERANCE:
                continue
            # rank-one update of W = Φ V⁻¹ after replacing node p by candidate c
            pivot = W[c, p]
            row = W[c, :].copy()
            row[p] -= 1.0
            W -= np.outer(W[:, p], row) / pivot
            selected[p] = c
            swaps += 1
            history.append(history[-1] + gain)
            improved = True
        if not improved:
            break
    return selected, passes, swaps


def _probe_sup(M: SpectralManifold, basis, V: np.ndarray, probes: np.ndarray) -> float:
    lu = linalg.lu_factor(V)
    best = 0.0
    for start in range(0, len(probes), _PROBE_CHUNK):
        phi = evaluate_basis(M, basis, probes[start:start + _PROBE_CHUNK])
        best = max(best, float(np.max(np.abs(linalg.lu_solve(lu, phi.T, trans=1)))))
    return best


def _exhaustive_best(phi: np.ndarray, k_L: int) -> Tuple[np.ndarray, float]:
    best_value = -math.inf
    best_subset: Optional[Tuple[int, ...]] = None
    combos = itertools.combinations(range(len(phi)), k_L)
    while True:
        batch = list(itertools.islice(combos, _EXHAUSTIVE_BATCH))
        if not batch:
            break
        idx = np.array(batch, dtype=int)
        sign, logdet = np.linalg.slogdet(phi[idx])
        logdet = np.where(sign != 0, logdet, -np.inf)
        j = int(np.argmax(logdet))
        if logdet[j] > best_value:
            best_value = float(logdet[j])
            best_subset = batch[j]
    return np.array(best_subset, dtype=int), best_value


def approximate_fekete(
    M: SpectralManifold,
    L: float,
    candidate_count: Optional[int] = None,
    exchange_rounds: int = DEFAULT_EXCHANGE_ROUNDS,
    seed: int = 42,
    candidates: Optional[np.ndarray] = None,
    candidate_factor: int = DEFAULT_CANDIDATE_FACTOR,
    exhaustive_limit: int = DEFAULT_EXHAUSTIVE_LIMIT,
) -> FeketeResult:
    """
    Greedy determinant maximization with local exchange over a candidate set.

    Stage 1 picks k_L candidates by column-pivoted QR of the candidate
    evaluation matrix. Stage 2 repeats up to ``exchange_rounds`` passes
    swapping node p for the candidate maximizing |l_p| whenever that raises
    log|det| by more than 1e-10. Stage 3 enumerates every k_L-subset when
    their number is at most ``exhaustive_limit`` and adopts a strictly
    better one; ``certified_optimal`` records that the result is the
    maximum over the candidate set.

    Raises:
        InvalidParameterError: If the candidate set is too small
        EnlargeCandidatesError: If the candidate rows are rank deficient
    """
    if exchange_rounds < 0:
        raise InvalidParameterError(f"exchange_rounds must be nonnegative, got {exchange_rounds}")
    basis = eigenbasis(M, L)
    k_L = len(basis)
    pts, descriptor = _candidate_set(M, k_L, candidate_count, candidate_factor, seed, candidates)
    phi = evaluate_basis(M, basis, pts)

    selected = _greedy_select(phi, k_L)
    greedy_value = _log_abs_det(phi[selected])
    if not math.isfinite(greedy_value):
        raise EnlargeCandidatesError(f"greedy Vandermonde is singular at L={L}; enlarge the candidate set")
    history = [greedy_value]
    selected, passes, swaps = _exchange(phi, selected, exchange_rounds, history)

    certified = False
    if special.comb(len(pts), k_L, exact=True) <= exhaustive_limit:
        subset, value = _exhaustive_best(phi, k_L)
        current = _log_abs_det(phi[selected])
        if value > current + 1e-12 * max(1.0, abs(current)):
            logger.info(f"exhaustive search improved log|det| at L={L}: {current:.12g} -> {value:.12g}")
            selected = subset
            history.append(max(value, history[-1]))
        certified = True

    V = phi[selected]
    V.setflags(write=False)
    log_abs_det = _log_abs_det(V)
    nodes = pts[selected]
    nodes.setflags(write=False)

    W = _lagrange_values(V, phi)
    sup_candidates = float(np.max(np.abs(W)))
    sup_probes = _probe_sup(M, basis, V, M.probe_grid(1.0 / (2.0 * L)))

    result = FeketeResult(
        manifold=M,
        L=float(L),
        nodes=nodes,
        node_indices=selected,
        vandermonde=V,
        log_abs_det=log_abs_det,
        greedy_log_abs_det=greedy_value,
        separation=separation_constant(M, nodes, L),
        lagrange_sup=max(sup_candidates, sup_probes),
        lagrange_sup_candidates=sup_candidates,
        candidate_descriptor=descriptor,
        candidate_count=len(pts),
        exchange_passes=passes,
        swaps=swaps,
        history=tuple(history),
        certified_optimal=certified,
    )
    logger.info(
        f"Fekete {M.name} L={L}: k_L={k_L} log|det|={log_abs_det:.6f} "
        f"swaps={swaps} passes={passes} s={result.separation:.4f}"
    )
    return result


def fekete_family(
    M: SpectralManifold, L_list: Sequence[float], **options
) -> Tuple[TriangularFamily, Dict[float, FeketeResult]]:
    """Approximate Fekete points at every level, as a family plus per-level results."""
    results = {float(L): approximate_fekete(M, L, **options) for L in sorted(L_list)}
    family = TriangularFamily(M, {L: r.nodes for L, r in results.items()}, "fekete")
    return family, results


def lagrange_matrix(M: SpectralManifold, fekete: FeketeResult, points: np.ndarray) -> np.ndarray:
    """
    All Lagrange functions at many points: out[n, i] = l_i(z_n).

    Raises:
        SingularConfigurationError: If the Vandermonde matrix is singular
    """
    if not math.isfinite(fekete.log_abs_det):
        raise SingularConfigurationError(f"Vandermonde matrix at L={fekete.L} is singular")
    basis = eigenbasis(M, fekete.L)
    return _lagrange_values(fekete.vandermonde, evaluate_basis(M, basis, points))


def lagrange_eval(M: SpectralManifold, fekete: FeketeResult, i: int, z: np.ndarray) -> float:
    """l_i(z), the i-th entry of V⁻ᵀ φ(z)."""
    if not 0 <= i < fekete.k_L:
        raise InvalidParameterError(f"node index {i} out of range for k_L={fekete.k_L}")
    return float(lagrange_matrix(M, fekete, z)[0, i])


def interpolate(M: SpectralManifold, fekete: FeketeResult, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Σ_i values_i l_i at points; exact on E_L."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != fekete.k_L:
        raise InvalidParameterError(f"expected {fekete.k_L} node values, got {values.shape[0]}")
    return lagrange_matrix(M, fekete, points) @ values


def weighted_bandwidth(L: float, eps: float, C_prod: float) -> float:
    """
    Bandwidth Lε/C of the weighted kernel.

    Raises:
        BandwidthTooSmallError: If Lε/C < 1
    """
    if not eps > 0 or not C_prod > 0:
        raise InvalidParameterError(f"eps and C_prod must be positive, got {eps}, {C_prod}")
    bandwidth = L * eps / C_prod
    if bandwidth < 1:
        raise BandwidthTooSmallError(f"weighted kernel bandwidth L*eps/C = {bandwidth} is below 1")
    return bandwidth


def weighted_kernel(
    M: SpectralManifold,
    L: float,
    eps: float,
    C_prod: float,
    z: np.ndarray,
    w: np.ndarray,
    cutoff: float = DEFAULT_CUTOFF,
) -> float:
    """p(z, w) = B(z, w)/B(z, z) with B the smooth kernel at bandwidth Lε/C; p(z, z) = 1."""
    spec = KernelSpec.smooth(weighted_bandwidth(L, eps, C_prod), cutoff)
    return kernel_value(M, spec, z, w) / kernel_value(M, spec, z, z)


def weighted_kernel_matrix(
    M: SpectralManifold,
    L: float,
    eps: float,
    C_prod: float,
    Z: np.ndarray,
    W: np.ndarray,
    cutoff: float = DEFAULT_CUTOFF,
) -> np.ndarray:
    """p(Z_n, W_k) for all pairs."""
    spec = KernelSpec.smooth(weighted_bandwidth(L, eps, C_prod), cutoff)
    numerator = kernel_matrix(M, spec, Z, W)
    return numerator / kernel_diagonal(M, spec, Z)[:, None]


def weighted_kernel_l1(
    M: SpectralManifold, L: float, eps: float, C_prod: float, z: np.ndarray, cutoff: float = DEFAULT_CUTOFF
) -> float:
    """∫ |p(z, ·)| dV."""
    spec = KernelSpec.smooth(weighted_bandwidth(L, eps, C_prod), cutoff)
    return kernel_l1_mass(M, spec, z) / kernel_value(M, spec, z, z)


def weighted_reconstruction(
    M: SpectralManifold,
    nodes: FeketeResult,
    L: float,
    eps: float,
    C_prod: float,
    coeffs: np.ndarray,
    points: np.ndarray,
    cutoff: float = DEFAULT_CUTOFF,
) -> np.ndarray:
    """
    Σ_j p(z, x_j) f(x_j) l_j(z) for f = Σ c_i φ_i ∈ E_L.

    The nodes are Fekete points for a larger space E_{L'}; the formula is
    exact whenever f · p(z, ·) ∈ E_{L'}, e.g. L' ≥ L(1+ε) on an admissible
    manifold with constant C_prod.
    """
    basis = eigenbasis(M, L)
    f_nodes = evaluate_basis(M, basis, nodes.nodes) @ np.asarray(coeffs, dtype=float)
    p = weighted_kernel_matrix(M, L, eps, C_prod, points, nodes.nodes, cutoff)
    lag = lagrange_matrix(M, nodes, points)
    return (p * lag) @ f_nodes


def dilated_level(L: float, eps: float) -> int:
    """⌊(1+ε)L⌋, robust to representation error in the product."""
    return int(math.floor((1.0 + eps) * L + 1e-9))


def dilated_family_check(
    M: SpectralManifold, fekete: TriangularFamily, L_list: Sequence[float], eps: float
) -> List[DilatedCheck]:
    """
    Frame bounds of Z_ε(L) = Z(⌊(1+ε)L⌋) and Riesz bounds of Z_{−ε}(L) = Z(⌊(1−ε)L⌋), both at bandwidth L.

    Raises:
        MissingLevelError: If a dilated level is absent from the family
    """
    if not 0 <= eps < 1:
        raise InvalidParameterError(f"eps must lie in [0, 1), got {eps}")
    checks = []
    for L in sorted(float(L) for L in L_list):
        L_plus = dilated_level(L, eps)
        L_minus = dilated_level(L, -eps)
        frame = frame_bounds(M, fekete[L_plus], L)
        riesz = riesz_bounds(M, fekete[L_minus], L)
        logger.debug(f"dilated L={L}: A={frame.A:.4g} (Z[{L_plus}]) a={riesz.a:.4g} (Z[{L_minus}])")
        checks.append(DilatedCheck(L, L_plus, L_minus, frame, riesz))
    return checks


def default_cap_panel(M: SpectralManifold, n_centers: int = 16) -> CapPanel:
    top = min(M.max_radius, math.pi / 2.0)
    return CapPanel(M.low_discrepancy_points(n_centers), tuple(f * top for f in (0.2, 0.4, 0.6, 0.8)))


def eigenfunction_panel(M: SpectralManifold, count: int = 4) -> Tuple[PanelFunction, ...]:
    """The lowest nonconstant eigenfunctions; on the sphere these are the coordinate functions."""
    bandwidth = 1.0
    while len(eigenbasis(M, bandwidth)) < count + 1:
        bandwidth *= 2.0
    basis = eigenbasis(M, bandwidth)
    panel = []
    for mode in basis.modes[1:count + 1]:
        def func(points, _i=mode.index):
            return evaluate_basis(M, basis, points)[:, _i]

        panel.append(PanelFunction(name=f"phi{mode.descriptor}", func=func, mean=0.0))
    return tuple(panel)


def torus_exp_cos_panel(kappa: float = TORUS_PANEL_KAPPA) -> Tuple[PanelFunction, ...]:
    """
    exp(κ cos 2π(a·x) + κ cos 2π(b·x)) for four independent integer pairs (a, b).

    x ↦ (a·x, b·x) maps the torus onto itself and preserves its volume, so
    each mean is I₀(κ)², and every Fourier coefficient is a positive product
    of Bessel values. The 9-point lattices with an orthogonal E_10
    Vandermonde integrate every mode with |n_i| ≤ 2 exactly, and on them the
    moment error is a positive sum over the dual lattice.
    """
    mean = float(special.i0(kappa) ** 2)
    panel = []
    for a, b in TORUS_PANEL_DIRECTIONS:
        def func(points, _a=np.array(a, float), _b=np.array(b, float)):
            pts = _as_points(points, 2)
            return np.exp(kappa * (np.cos(2.0 * math.pi * pts @ _a) + np.cos(2.0 * math.pi * pts @ _b)))

        name = f"exp({kappa:g}cos(2pi*{_direction_label(a)})+{kappa:g}cos(2pi*{_direction_label(b)}))"
        panel.append(PanelFunction(name=name, func=func, mean=mean))
    return tuple(panel)


def _direction_label(direction: Tuple[int, int]) -> str:
    terms = {(1, 0): "x", (0, 1): "y", (1, 1): "(x+y)", (1, -1): "(x-y)"}
    return terms[tuple(direction)]


def default_function_panel(M: SpectralManifold, count: int = 4) -> Tuple[PanelFunction, ...]:
    """The exp-cosine panel on the torus, the lowest eigenfunctions elsewhere."""
    if isinstance(M, Torus2):
        return torus_exp_cos_panel()[:count]
    return eigenfunction_panel(M, count)


def equidistribution_test(
    M: SpectralManifold,
    family: TriangularFamily,
    L_list: Optional[Sequence[float]] = None,
    cap_panel: Optional[CapPanel] = None,
    fn_panel: Optional[Sequence[PanelFunction]] = None,
) -> EquidistReport:
    """
    Distance of μ_L = (1/m_L) Σ δ_{z_j} from the normalized volume measure.

    Per level: cap discrepancy max |μ_L(B) − σ(B)| over the cap panel,
    moment errors |μ_L(f) − σ(f)| over the function panel, and the total
    mass error (m_L − k_L)/k_L.
    """
    cap_panel = default_cap_panel(M) if cap_panel is None else cap_panel
    fn_panel = default_function_panel(M) if fn_panel is None else tuple(fn_panel)
    if len(cap_panel.centers) == 0 or not cap_panel.radii or not fn_panel:
        raise InvalidParameterError("equidistribution panels must be nonempty")
    centers = _as_points(cap_panel.centers, M.chart_dim)
    fractions = np.array(
        [[ball_volume(M, c, r) / M.total_volume for r in cap_panel.radii] for c in centers]
    )

    rows = []
    for L in (family.bandwidths if L_list is None else sorted(float(L) for L in L_list)):
        pts = family[L]
        m_L = len(pts)
        d = pairwise_distances(M, centers, pts)
        measure = np.stack([np.sum(d <= r, axis=1) / m_L for r in cap_panel.radii], axis=1)
        discrepancy = float(np.max(np.abs(measure - fractions)))
        moments = tuple(float(abs(np.mean(f.func(pts)) - f.mean)) for f in fn_panel)
        k_L = len(eigenbasis(M, L))
        rows.append(EquidistRow(L, m_L, discrepancy, moments, (m_L - k_L) / k_L))
        logger.debug(f"equidistribution L={L}: discrepancy={discrepancy:.4g} moments={moments}")
    return EquidistReport(tuple(rows), tuple(f.name for f in fn_panel), len(centers) * len(cap_panel.radii))


def product_property_check(
    M: SpectralManifold,
    L: float,
    eps: float,
    C_grid: Sequence[float] = DEFAULT_C_GRID,
    trials: int = 3,
    seed: int = 42,
    tolerance: float = RESIDUAL_TOLERANCE,
) -> AdmissibilityReport:
    """
    Measure the admissibility constant C in E_L · E_{εL} ⊂ E_{L(1+Cε)}.

    Random f ∈ E_L and g ∈ E_{εL} are multiplied on a global rule exact up
    to bandwidth 3L; f·g is expanded up to L(1 + max(C)ε) and the residual
    energy fraction outside E_{L(1+Cε)} is computed for each grid value.
    Grid values with L(1+Cε) > 3L are dropped.
    """
    if not eps > 0:
        raise InvalidParameterError(f"eps must be positive, got {eps}")
    if trials < 1:
        raise InvalidParameterError(f"trials must be at least 1, got {trials}")
    grid = sorted(float(C) for C in C_grid if C >= 0 and L * (1.0 + C * eps) <= 3.0 * L)
    if len(grid) < len(list(C_grid)):
        logger.warning(f"admissibility grid trimmed to C <= {2.0 / eps} (expansion limit 3L)")
    if not grid:
        raise InvalidParameterError("admissibility grid is empty")

    rule = global_quadrature(M, 3.0 * L)
    basis_f = eigenbasis(M, L)
    basis_g = eigenbasis(M, max(1.0, eps * L))
    top = eigenbasis(M, L * (1.0 + grid[-1] * eps))
    rng = np.random.default_rng(seed)

    phi_f = evaluate_basis(M, basis_f, rule.nodes)
    phi_g = evaluate_basis(M, basis_g, rule.nodes)
    phi_top = evaluate_basis(M, top, rule.nodes)
    f = phi_f @ rng.standard_normal((len(basis_f), trials))
    g = phi_g @ rng.standard_normal((len(basis_g), trials))
    product = f * g
    energy = rule.weights @ (product * product)
    coeffs = phi_top.T @ (rule.weights[:, None] * product)

    residuals: Dict[float, float] = {}
    for C in grid:
        inside = np.sum(coeffs[top.mask(L * (1.0 + C * eps))] ** 2, axis=0)
        residuals[C] = float(np.max(np.maximum(0.0, 1.0 - inside / energy)))
    passing = [C for C in grid if residuals[C] < tolerance]
    C_min = passing[0] if passing else None
    logger.info(f"admissibility on {M.name} L={L} eps={eps}: C = {C_min}")
    return AdmissibilityReport(L=float(L), eps=eps, C=C_min, residuals=residuals, trials=trials)
