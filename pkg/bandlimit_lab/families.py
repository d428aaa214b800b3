"""
Triangular point families Z = {Z(L)}.

A family maps each bandwidth L to an ordered point set Z(L) of m_L points.
This module provides:
- Constructors (lattice/spiral grids, uniform random, perturbation, union)
- Separation and mesh constants per level
- Greedy extraction of uniformly separated subfamilies
- The plain-text family file format ``L j coord1 coord2 ...``
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .manifold import (
    SpectralManifold,
    _as_points,
    eigenbasis,
    minimum_separation,
    nearest_distances,
)
from .utils import ConfigError, InvalidParameterError, MissingLevelError, format_float

logger = logging.getLogger(__name__)

PROVENANCES = ("grid", "random", "perturbed", "fekete", "loaded", "separated", "union")

# relative slack on the separation test so lattice ties are kept
SEPARATION_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class TriangularFamily:
    """
    Point sets Z(L) keyed by bandwidth, with a provenance tag.

    Levels are stored sorted by L; every point array is canonicalized and
    read-only.
    """

    manifold: SpectralManifold
    levels: Dict[float, np.ndarray]
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InvalidParameterError(f"unknown family provenance {self.provenance!r}")
        if not self.levels:
            raise InvalidParameterError("a family needs at least one level")
        cleaned: Dict[float, np.ndarray] = {}
        for L in sorted(self.levels):
            pts = self.manifold.canonicalize(_as_points(self.levels[L], self.manifold.chart_dim))
            if len(pts) == 0:
                raise InvalidParameterError(f"level L={L} is empty")
            pts.setflags(write=False)
            cleaned[float(L)] = pts
        object.__setattr__(self, "levels", cleaned)

    @property
    def bandwidths(self) -> List[float]:
        return list(self.levels)

    def __getitem__(self, L: float) -> np.ndarray:
        try:
            return self.levels[float(L)]
        except KeyError:
            raise MissingLevelError(f"family has no level L={L}; available: {self.bandwidths}") from None

    def __contains__(self, L: float) -> bool:
        return float(L) in self.levels

    def __iter__(self) -> Iterator[float]:
        return iter(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def m_L(self, L: float) -> int:
        return len(self[L])

    def total_points(self) -> int:
        return sum(len(pts) for pts in self.levels.values())


@dataclass(frozen=True)
class SeparationEntry:
    L: float
    m_L: int
    k_L: int
    separation: float
    mesh: float

    @property
    def ratio(self) -> float:
        return self.m_L / self.k_L


@dataclass(frozen=True)
class SeparationReport:
    """Per-level separation constant s(L), mesh constant η(L) and counts."""

    entries: Tuple[SeparationEntry, ...] = field(default_factory=tuple)

    def __getitem__(self, L: float) -> SeparationEntry:
        for entry in self.entries:
            if entry.L == float(L):
                return entry
        raise MissingLevelError(f"report has no level L={L}")

    @property
    def min_separation(self) -> float:
        return min(entry.separation for entry in self.entries)

    @property
    def max_mesh(self) -> float:
        return max(entry.mesh for entry in self.entries)

    def rows(self) -> List[Dict[str, float]]:
        return [
            {
                "L": e.L,
                "m_L": e.m_L,
                "k_L": e.k_L,
                "ratio": e.ratio,
                "s": e.separation,
                "eta": e.mesh,
            }
            for e in self.entries
        ]


def level_points(Z: Union[TriangularFamily, np.ndarray], L: float, M: Optional[SpectralManifold] = None) -> np.ndarray:
    """Z(L) for a family, or the array itself when a single point set is given."""
    if isinstance(Z, TriangularFamily):
        return Z[L]
    if M is None:
        return np.asarray(Z, dtype=float)
    return _as_points(Z, M.chart_dim)


def make_grid_family(M: SpectralManifold, L_list: Sequence[float], nu: float) -> TriangularFamily:
    """
    Lattice-type family at oversampling ν.

    On the torus Z(L) is the ⌈νL⌉ × ⌈νL⌉ uniform lattice, on the sphere a
    golden-spiral set of ⌈(νL)²⌉ points; products take tensor grids.
    """
    if not nu > 0:
        raise InvalidParameterError(f"oversampling must be positive, got {nu}")
    if not L_list:
        raise InvalidParameterError("grid family needs at least one bandwidth")
    levels = {float(L): M.grid_points(nu, L) for L in L_list}
    logger.debug(f"grid family on {M.name} nu={nu}: " + ", ".join(f"L={L}:{len(p)}" for L, p in levels.items()))
    return TriangularFamily(M, levels, "grid")


def make_random_family(M: SpectralManifold, L_list: Sequence[float], nu: float, seed: int = 42) -> TriangularFamily:
    """Uniform random family with the same level sizes as the ν grid family."""
    if not nu > 0:
        raise InvalidParameterError(f"oversampling must be positive, got {nu}")
    rng = np.random.default_rng(seed)
    levels = {}
    for L in sorted(float(L) for L in L_list):
        levels[L] = M.uniform_points(len(M.grid_points(nu, L)), rng)
    return TriangularFamily(M, levels, "random")


def family_from_levels(
    M: SpectralManifold, levels: Mapping[float, np.ndarray], provenance: str = "loaded"
) -> TriangularFamily:
    return TriangularFamily(M, dict(levels), provenance)


def separation_constant(M: SpectralManifold, points: np.ndarray, L: float) -> float:
    """s = L · min pairwise distance; +inf for a single point."""
    return float(L) * minimum_separation(M, points)


def mesh_constant(M: SpectralManifold, points: np.ndarray, L: float, density: float = 4.0) -> float:
    """η = L · sup_ξ d(ξ, Z(L)) estimated on a probe grid of spacing 1/(density·L)."""
    probes = M.probe_grid(1.0 / (density * float(L)))
    return float(L) * float(nearest_distances(M, probes, points).max())


def separation_report(M: SpectralManifold, Z: TriangularFamily) -> SeparationReport:
    """Exact separation and probe-grid mesh constants for every level of Z."""
    entries = []
    for L in Z:
        pts = Z[L]
        entry = SeparationEntry(
            L=L,
            m_L=len(pts),
            k_L=len(eigenbasis(M, L)),
            separation=separation_constant(M, pts, L),
            mesh=mesh_constant(M, pts, L),
        )
        logger.debug(f"separation {M.name} L={L}: s={entry.separation:.6g} eta={entry.mesh:.6g}")
        entries.append(entry)
    return SeparationReport(tuple(entries))


def _greedy_separated(M: SpectralManifold, points: np.ndarray, min_distance: float) -> np.ndarray:
    threshold = min_distance * (1.0 - SEPARATION_SLACK)
    kept: List[int] = []
    for j in range(len(points)):
        if kept:
            d = M.paired_distances(points[j][None, :], points[kept])
            if float(d.min()) < threshold:
                continue
        kept.append(j)
    return np.asarray(kept, dtype=int)


def extract_separated_subfamily(M: SpectralManifold, Z: TriangularFamily, target_s: float) -> TriangularFamily:
    """
    Greedy first-fit subfamily with separation constant at least target_s.

    Points are visited in index order; a point is kept iff it lies at least
    target_s/L from every point kept so far. Each discarded point is therefore
    within target_s/L of a kept one.
    """
    if not target_s > 0:
        raise InvalidParameterError(f"target separation must be positive, got {target_s}")
    levels = {}
    for L in Z:
        pts = Z[L]
        kept = _greedy_separated(M, pts, target_s / L)
        levels[L] = pts[kept]
        logger.debug(f"separated subfamily L={L}: kept {len(kept)} of {len(pts)}")
    return TriangularFamily(M, levels, "separated")


def perturb_family(M: SpectralManifold, Z: TriangularFamily, delta: float, seed: int = 42) -> TriangularFamily:
    """
    Move every point independently and uniformly within distance δ/L.

    Levels are processed in increasing L from a single generator, so the
    output depends only on (Z, δ, seed).
    """
    if not delta >= 0:
        raise InvalidParameterError(f"perturbation size must be nonnegative, got {delta}")
    if delta == 0:
        return TriangularFamily(M, {L: Z[L].copy() for L in Z}, "perturbed")
    rng = np.random.default_rng(seed)
    levels = {L: M.random_in_balls(Z[L], delta / L, rng) for L in Z}
    return TriangularFamily(M, levels, "perturbed")


def union_family(first: TriangularFamily, second: TriangularFamily) -> TriangularFamily:
    """Level-wise concatenation over the bandwidths both families share."""
    if first.manifold != second.manifold:
        raise InvalidParameterError(f"cannot unite families on {first.manifold} and {second.manifold}")
    shared = [L for L in first if L in second]
    if not shared:
        raise MissingLevelError("families share no bandwidth")
    levels = {L: np.vstack([first[L], second[L]]) for L in shared}
    return TriangularFamily(first.manifold, levels, "union")


def format_family(Z: TriangularFamily) -> str:
    """Family file text: one ``L j coord...`` line per point, sorted by (L, j), j from 1."""
    lines = []
    for L in Z:
        for j, point in enumerate(Z[L], start=1):
            coords = " ".join(format_float(c) for c in point)
            lines.append(f"{format_float(L)} {j} {coords}")
    return "\n".join(lines) + "\n"


def parse_family(M: SpectralManifold, text: str, provenance: str = "loaded") -> TriangularFamily:
    """
    Parse family file text.

    Raises:
        ConfigError: If a line is malformed, indices are not 1..m_L in order,
            or the coordinate count does not match the manifold chart
    """
    rows: Dict[float, List[Tuple[int, List[float]]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 + M.chart_dim:
            raise ConfigError(f"family line {lineno}: expected {2 + M.chart_dim} fields, got {len(parts)}")
        try:
            L = float(parts[0])
            j = int(parts[1])
            coords = [float(p) for p in parts[2:]]
        except ValueError as e:
            raise ConfigError(f"family line {lineno}: {e}") from e
        if not all(math.isfinite(c) for c in coords) or not math.isfinite(L):
            raise ConfigError(f"family line {lineno}: non-finite value")
        rows.setdefault(L, []).append((j, coords))

    if not rows:
        raise ConfigError("family file contains no points")
    levels = {}
    for L, entries in rows.items():
        indices = [j for j, _ in entries]
        if indices != list(range(1, len(entries) + 1)):
            raise ConfigError(f"family level L={L}: point indices must run 1..{len(entries)} in order")
        levels[L] = np.array([coords for _, coords in entries], dtype=float)
    return TriangularFamily(M, levels, provenance)


def write_family(path: Union[str, Path], Z: TriangularFamily) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_family(Z), encoding="utf-8")
    logger.info(f"Wrote family ({len(Z)} levels, {Z.total_points()} points) to {path}")
    return path


def read_family(path: Union[str, Path], M: SpectralManifold) -> TriangularFamily:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read family file {path}: {e}") from e
    return parse_family(M, text)
