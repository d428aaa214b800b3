"""
Beurling-Landau density estimators.

The local ratio at center ξ, scale R and bandwidth L is

    (#(Z(L) ∩ B(ξ, R/L)) / k_L) / (vol B(ξ, R/L) / vol M)

and the densities D⁻, D⁺ are its liminf/limsup extremes. The limsup/liminf in L
is replaced by the two largest grid levels. The outer limit in R converges,
so it is read off at the largest grid radius: at intermediate R the closed-ball
counts of a lattice overshoot by whole lattice shells. Both limit orderings are
reported.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .families import TriangularFamily
from .manifold import SpectralManifold, _as_points, ball_volume, eigenbasis, pairwise_distances
from .utils import InvalidParameterError

logger = logging.getLogger(__name__)

MAX_FAMILY_PROBES = 64
LOW_DISCREPANCY_PROBES = 64
LEVEL_TAIL = 2
RADIUS_TAIL = 1

# closed balls: boundary ties count in
BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class DensityCell:
    L: float
    R: float
    ratios: np.ndarray = field(compare=False)

    @property
    def minimum(self) -> float:
        return float(self.ratios.min())

    @property
    def maximum(self) -> float:
        return float(self.ratios.max())


@dataclass(frozen=True, eq=False)
class DensityReport:
    """
    Full (L, R, ξ) grid of local ratios with finite-scale density surrogates.

    ``dminus``/``dplus`` take the extreme over L first (inner) and then R;
    the ``_r_first`` variants swap the order. ``mass[L]`` is μ_L(M) = m_L/k_L.
    """

    L_list: Tuple[float, ...]
    R_list: Tuple[float, ...]
    cells: Tuple[DensityCell, ...]
    centers: Dict[float, np.ndarray]
    dminus: float
    dplus: float
    dminus_r_first: float
    dplus_r_first: float
    mass: Dict[float, float]
    surrogate_L: Tuple[float, ...] = ()
    surrogate_R: Tuple[float, ...] = ()

    def cell(self, L: float, R: float) -> DensityCell:
        for cell in self.cells:
            if cell.L == float(L) and cell.R == float(R):
                return cell
        raise KeyError(f"no density cell for L={L}, R={R}")

    def grid_meta(self) -> Dict[str, object]:
        return {
            "L_list": list(self.L_list),
            "R_list": list(self.R_list),
            "surrogate_L": list(self.surrogate_L),
            "surrogate_R": list(self.surrogate_R),
            "centers_per_level": {str(L): len(c) for L, c in self.centers.items()},
        }


def _counts(M: SpectralManifold, points: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    if len(points) == 0:
        return np.zeros(len(centers), dtype=int)
    d = pairwise_distances(M, centers, points)
    return np.sum(d <= radius * (1.0 + BOUNDARY_SLACK), axis=1)


def local_ratio(M: SpectralManifold, Z: TriangularFamily, L: float, center: np.ndarray, R: float) -> float:
    """
    Normalized point count over normalized volume in the closed ball B(ξ, R/L).

    Raises:
        RadiusTooLargeError: If R/L is not an admissible radius
    """
    radius = R / L
    volume = ball_volume(M, center, radius)
    pts = Z[L] if isinstance(Z, TriangularFamily) else np.asarray(Z, float).reshape(-1, M.chart_dim)
    count = int(_counts(M, pts, _as_points(center, M.chart_dim), radius)[0])
    k_L = len(eigenbasis(M, L))
    return (count / k_L) / (volume / M.total_volume)


def default_centers(M: SpectralManifold, points: np.ndarray, seed: Optional[int] = None) -> np.ndarray:
    """Up to 64 evenly indexed family points plus 64 low-discrepancy points."""
    step = max(1, math.ceil(len(points) / MAX_FAMILY_PROBES))
    own = points[::step][:MAX_FAMILY_PROBES]
    return np.vstack([own, M.low_discrepancy_points(LOW_DISCREPANCY_PROBES, seed)])


def _volume_fractions(M: SpectralManifold, centers: np.ndarray, radius: float) -> np.ndarray:
    M.check_radius(radius)
    closed = M.closed_ball_volume(radius)
    if closed is not None:
        return np.full(len(centers), closed / M.total_volume)
    return np.array([ball_volume(M, c, radius) for c in centers]) / M.total_volume


def density_estimate(
    M: SpectralManifold,
    Z: TriangularFamily,
    L_list: Sequence[float],
    R_list: Sequence[float],
    probe_centers: Optional[np.ndarray] = None,
    level_tail: int = LEVEL_TAIL,
    radius_tail: int = RADIUS_TAIL,
) -> DensityReport:
    """
    Local ratios over the grid and the D⁻/D⁺ surrogates.

    D⁻ = min over the largest ``radius_tail`` radii of min over the largest
    ``level_tail`` levels of min over centers; D⁺ the same with max.

    Raises:
        InvalidParameterError: If a grid is empty
        MissingLevelError: If Z lacks a requested level
    """
    if not L_list or not R_list:
        raise InvalidParameterError("density estimate needs nonempty L and R grids")
    if level_tail < 1 or radius_tail < 1:
        raise InvalidParameterError(f"surrogate tails must be positive, got {level_tail}, {radius_tail}")
    Ls = tuple(sorted(float(L) for L in L_list))
    Rs = tuple(sorted(float(R) for R in R_list))

    cells: List[DensityCell] = []
    centers_by_level: Dict[float, np.ndarray] = {}
    mass: Dict[float, float] = {}
    for L in Ls:
        pts = Z[L]
        k_L = len(eigenbasis(M, L))
        mass[L] = len(pts) / k_L
        centers = default_centers(M, pts) if probe_centers is None else _as_points(probe_centers, M.chart_dim)
        centers_by_level[L] = centers
        for R in Rs:
            radius = R / L
            fractions = _volume_fractions(M, centers, radius)
            ratios = (_counts(M, pts, centers, radius) / k_L) / fractions
            ratios.setflags(write=False)
            cells.append(DensityCell(L, R, ratios))
            logger.debug(f"density L={L} R={R}: min={ratios.min():.4f} max={ratios.max():.4f}")

    by_key = {(c.L, c.R): c for c in cells}
    top_L, top_R = Ls[-level_tail:], Rs[-radius_tail:]
    dminus = min(min(by_key[(L, R)].minimum for L in top_L) for R in top_R)
    dplus = max(max(by_key[(L, R)].maximum for L in top_L) for R in top_R)
    dminus_r = min(min(by_key[(L, R)].minimum for R in top_R) for L in top_L)
    dplus_r = max(max(by_key[(L, R)].maximum for R in top_R) for L in top_L)
    logger.info(f"density on {M.name}: D- ~ {dminus:.4f}, D+ ~ {dplus:.4f}")

    return DensityReport(
        L_list=Ls,
        R_list=Rs,
        cells=tuple(cells),
        centers=centers_by_level,
        dminus=dminus,
        dplus=dplus,
        dminus_r_first=dminus_r,
        dplus_r_first=dplus_r,
        mass=mass,
        surrogate_L=top_L,
        surrogate_R=top_R,
    )
