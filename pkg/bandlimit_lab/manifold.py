"""
Compact manifolds with closed-form Laplacian eigendata.

This module provides the catalogue the rest of the lab computes on:
- Circle (R/Z), flat torus T² = R²/Z², unit round sphere S²
- Finite products of catalogue members
- Eigenbases E_L, geodesic distances, ball volumes
- Global and ball-restricted quadrature rules

Points are numpy arrays of shape (n, chart_dim). Circle points carry one
coordinate in [0, 1); torus points (x, y) in [0, 1)²; sphere points
(colatitude θ ∈ [0, π], azimuth φ ∈ [0, 2π)); product points concatenate
the charts of their factors.
"""

import functools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy import special

from .utils import (
    ConfigError,
    InvalidParameterError,
    NumericalIntegrityError,
    RadiusTooLargeError,
    UnimplementedManifoldError,
)

logger = logging.getLogger(__name__)

DEFAULT_BALL_RESOLUTION: Tuple[int, int] = (64, 128)
FREQUENCY_TOLERANCE = 1e-12
BALL_WEIGHT_TOLERANCE = 1e-8
TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)

# pairwise distance blocks are capped at this many entries
_BLOCK_ENTRIES = 1 << 20

# recognized names without closed-form eigendata in this lab
_UNSUPPORTED_KINDS = frozenset({"klein", "rp2", "cp2", "hp2", "op2", "cayley"})


@dataclass(frozen=True)
class Mode:
    """One eigenfunction of the basis: its position, frequency and evaluation key."""

    index: int
    frequency: float
    descriptor: tuple


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """
    All eigenpairs with frequency at most the bandwidth, in canonical order.

    The ``table`` array holds integer mode data in a manifold-specific layout
    used for vectorized evaluation.
    """

    manifold: "SpectralManifold"
    bandwidth: float
    modes: Tuple[Mode, ...]
    frequencies: np.ndarray
    table: np.ndarray

    @property
    def k_L(self) -> int:
        return len(self.modes)

    def __len__(self) -> int:
        return len(self.modes)

    def mask(self, bandwidth: float) -> np.ndarray:
        """Boolean mask of the modes lying in E_bandwidth."""
        return self.frequencies <= bandwidth * (1.0 + FREQUENCY_TOLERANCE)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights over a region, with an exactness note."""

    nodes: np.ndarray
    weights: np.ndarray
    exactness: str

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Integrate sampled values (first axis runs over nodes)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _sort_key(lam2: float, descriptor: tuple) -> tuple:
    # rounding keeps exact frequency ties tied across float noise
    return (float(f"{lam2:.12g}"), descriptor)


def _gauss_legendre(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [a, b]."""
    x, w = special.roots_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


class SpectralManifold(ABC):
    """
    A compact manifold with closed-form eigenbasis, metric and quadrature.

    Subclasses are immutable and hashable so eigenbases can be cached per
    (manifold, bandwidth).
    """

    name: str
    dimension: int
    chart_dim: int
    total_volume: float
    max_radius: float

    # Spectral data

    @abstractmethod
    def _mode_candidates(self, L: float) -> Iterable[Tuple[float, tuple, tuple]]:
        """Yield (λ², descriptor, table row) for every mode with λ ≤ L."""

    @abstractmethod
    def _evaluate(self, basis: EigenBasis, points: np.ndarray) -> np.ndarray:
        """Evaluate every basis mode at every point, shape (n, k_L)."""

    # Metric

    @abstractmethod
    def canonicalize(self, points: np.ndarray) -> np.ndarray:
        """Wrap chart coordinates into their canonical ranges."""

    @abstractmethod
    def paired_distances(self, z: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Geodesic distance between broadcast-compatible point arrays."""

    @abstractmethod
    def metric_inverse_diag(self, points: np.ndarray) -> np.ndarray:
        """Diagonal of the inverse metric tensor at each point, shape (n, chart_dim)."""

    # Measure

    @abstractmethod
    def closed_ball_volume(self, r: float) -> Optional[float]:
        """Closed-form volume of a ball of radius r, None when unavailable."""

    @abstractmethod
    def _global_rule(self, max_frequency: float) -> QuadratureRule:
        """Rule exact for products of two modes with λ ≤ max_frequency."""

    @abstractmethod
    def geodesic_sphere(
        self, center: np.ndarray, rho: float, n_angle: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes on the geodesic sphere of radius rho; weights sum to its area."""

    # Point sets

    @abstractmethod
    def random_in_balls(self, centers: np.ndarray, radius: float, rng: np.random.Generator) -> np.ndarray:
        """One uniform sample in the geodesic ball around each center."""

    @abstractmethod
    def uniform_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Independent samples from the normalized volume measure."""

    @abstractmethod
    def low_discrepancy_points(self, n: int, seed: Optional[int] = None) -> np.ndarray:
        """Deterministic near-uniform points; a seed applies a random shift."""

    @abstractmethod
    def grid_points(self, nu: float, L: float) -> np.ndarray:
        """The lattice-type point set used by grid families at oversampling nu."""

    @abstractmethod
    def probe_grid(self, spacing: float) -> np.ndarray:
        """Regular probe grid with chart spacing at most ``spacing``."""

    @property
    @abstractmethod
    def base_point(self) -> np.ndarray:
        """Fixed reference point used by scans and probe sets."""

    @abstractmethod
    def distance_probe(self, n: int) -> np.ndarray:
        """Points along fixed geodesics from base_point spanning 0 to the diameter."""

    def _ball_rule(self, center: np.ndarray, r: float, resolution: Tuple[int, int]) -> QuadratureRule:
        """Gauss-Legendre in geodesic radius times the geodesic sphere rule."""
        n_radial, n_angle = resolution
        rhos, rho_weights = _gauss_legendre(n_radial, 0.0, r)
        nodes: List[np.ndarray] = []
        weights: List[np.ndarray] = []
        for rho, w_rho in zip(rhos, rho_weights):
            pts, w = self.geodesic_sphere(center, float(rho), n_angle)
            nodes.append(pts)
            weights.append(w_rho * w)
        return QuadratureRule(
            nodes=self.canonicalize(np.vstack(nodes)),
            weights=np.concatenate(weights),
            exactness=f"polar Gauss-Legendre {n_radial}x{n_angle}, radius {r!r}",
        )

    def check_radius(self, r: float) -> None:
        if not r > 0:
            raise InvalidParameterError(f"ball radius must be positive, got {r}")
        if r > self.max_radius * (1.0 + 1e-15):
            raise RadiusTooLargeError(
                f"radius {r} exceeds the closed-form limit {self.max_radius} on {self.name}"
            )

    def eigenbasis(self, L: float) -> EigenBasis:
        return eigenbasis(self, L)

    def __str__(self) -> str:
        return self.name


def _as_points(points: np.ndarray, chart_dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    if pts.shape[-1] != chart_dim:
        raise InvalidParameterError(f"expected chart dimension {chart_dim}, got shape {pts.shape}")
    return pts


def _wrap_unit(x: np.ndarray) -> np.ndarray:
    y = np.mod(x, 1.0)
    # np.mod maps tiny negatives to exactly 1.0
    y[y >= 1.0] = 0.0
    return y


def _kronecker_sequence(n: int, dim: int) -> np.ndarray:
    """Additive recurrence with the generalized golden ratio of the dimension."""
    # root of x^(d+1) = x + 1
    g = 2.0
    for _ in range(64):
        g = (1.0 + g) ** (1.0 / (dim + 1))
    alpha = np.array([g ** -(j + 1) for j in range(dim)])
    i = np.arange(1, n + 1, dtype=float)[:, None]
    return np.mod(0.5 + i * alpha, 1.0)


def _flat_random_in_balls(
    centers: np.ndarray, radius: float, rng: np.random.Generator
) -> np.ndarray:
    n = len(centers)
    rho = radius * np.sqrt(rng.random(n))
    alpha = TWO_PI * rng.random(n)
    return centers + np.column_stack([rho * np.cos(alpha), rho * np.sin(alpha)])


@dataclass(frozen=True)
class Circle(SpectralManifold):
    """The circle R/Z of length 1; modes 1, √2cos(2πnx), √2sin(2πnx) with λ = 2πn."""

    name: str = field(default="circle", init=False)
    dimension: int = field(default=1, init=False)
    chart_dim: int = field(default=1, init=False)
    total_volume: float = field(default=1.0, init=False)
    max_radius: float = field(default=0.5, init=False)

    def _mode_candidates(self, L):
        n_max = int(math.floor(L / TWO_PI * (1.0 + FREQUENCY_TOLERANCE)))
        yield 0.0, (0, 0), (0, 0)
        for n in range(1, n_max + 1):
            lam2 = (TWO_PI * n) ** 2
            yield lam2, (n, 1), (n, 1)
            yield lam2, (n, 2), (n, 2)

    def _evaluate(self, basis, points):
        x = points[:, 0]
        n = basis.table[:, 0]
        kind = basis.table[:, 1]
        phase = TWO_PI * np.outer(x, n)
        out = np.where(kind == 1, SQRT2 * np.cos(phase), SQRT2 * np.sin(phase))
        out[:, kind == 0] = 1.0
        return out

    def canonicalize(self, points):
        return _wrap_unit(_as_points(points, 1))

    def paired_distances(self, z, w):
        delta = np.abs(np.asarray(z, float)[..., 0] - np.asarray(w, float)[..., 0]) % 1.0
        return np.minimum(delta, 1.0 - delta)

    def metric_inverse_diag(self, points):
        return np.ones_like(_as_points(points, 1))

    def closed_ball_volume(self, r):
        return 2.0 * r

    def _global_rule(self, max_frequency):
        K = int(math.floor(max_frequency / TWO_PI * (1.0 + FREQUENCY_TOLERANCE)))
        N = 2 * K + 2
        nodes = (np.arange(N, dtype=float) / N)[:, None]
        return QuadratureRule(nodes, np.full(N, 1.0 / N), f"uniform {N}-point rule, exact to frequency {max_frequency!r}")

    def geodesic_sphere(self, center, rho, n_angle):
        c = np.asarray(center, float).reshape(1, 1)
        pts = np.vstack([c + rho, c - rho])
        return self.canonicalize(pts), np.ones(2)

    def uniform_points(self, n, rng):
        return rng.random((n, 1))

    def random_in_balls(self, centers, radius, rng):
        centers = _as_points(centers, 1)
        step = radius * (2.0 * rng.random(len(centers)) - 1.0)
        return self.canonicalize(centers + step[:, None])

    def low_discrepancy_points(self, n, seed=None):
        pts = _kronecker_sequence(n, 1)
        if seed is not None:
            pts = pts + np.random.default_rng(seed).random(1)
        return self.canonicalize(pts)

    def grid_points(self, nu, L):
        n = max(1, int(math.ceil(nu * L - 1e-9)))
        return (np.arange(n, dtype=float) / n)[:, None]

    def probe_grid(self, spacing):
        n = max(4, int(math.ceil(1.0 / spacing - 1e-9)))
        return (np.arange(n, dtype=float) / n)[:, None]

    @property
    def base_point(self):
        return np.zeros(1)

    def distance_probe(self, n):
        return np.linspace(0.0, 0.5, n)[:, None]


@dataclass(frozen=True)
class Torus2(SpectralManifold):
    """The flat torus R²/Z² of volume 1."""

    name: str = field(default="torus2", init=False)
    dimension: int = field(default=2, init=False)
    chart_dim: int = field(default=2, init=False)
    total_volume: float = field(default=1.0, init=False)
    max_radius: float = field(default=0.5, init=False)

    def _mode_candidates(self, L):
        bound = (L / TWO_PI) ** 2 * (1.0 + 2.0 * FREQUENCY_TOLERANCE)
        K = int(math.floor(math.sqrt(bound))) + 1
        for k1 in range(-K, K + 1):
            for k2 in range(-K, K + 1):
                s = k1 * k1 + k2 * k2
                if s > bound:
                    continue
                lam2 = TWO_PI * TWO_PI * s
                if k1 == 0 and k2 == 0:
                    yield 0.0, (0, 0, 0), (0, 0, 0)
                elif k1 > 0 or (k1 == 0 and k2 > 0):
                    yield lam2, (k1, k2, 1), (k1, k2, 1)
                    yield lam2, (k1, k2, 2), (k1, k2, 2)

    def _evaluate(self, basis, points):
        phase = TWO_PI * points @ basis.table[:, :2].T.astype(float)
        kind = basis.table[:, 2]
        out = np.where(kind == 1, SQRT2 * np.cos(phase), SQRT2 * np.sin(phase))
        out[:, kind == 0] = 1.0
        return out

    def canonicalize(self, points):
        return _wrap_unit(_as_points(points, 2))

    def paired_distances(self, z, w):
        delta = np.abs(np.asarray(z, float) - np.asarray(w, float)) % 1.0
        delta = np.minimum(delta, 1.0 - delta)
        return np.sqrt(np.sum(delta * delta, axis=-1))

    def metric_inverse_diag(self, points):
        return np.ones_like(_as_points(points, 2))

    def closed_ball_volume(self, r):
        return math.pi * r * r

    def _global_rule(self, max_frequency):
        K = int(math.floor(max_frequency / TWO_PI * (1.0 + FREQUENCY_TOLERANCE)))
        N = 2 * K + 2
        axis = np.arange(N, dtype=float) / N
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        return QuadratureRule(
            nodes, np.full(N * N, 1.0 / (N * N)), f"uniform {N}x{N} grid, exact to frequency {max_frequency!r}"
        )

    def geodesic_sphere(self, center, rho, n_angle):
        alpha = TWO_PI * np.arange(n_angle) / n_angle
        pts = np.asarray(center, float) + rho * np.column_stack([np.cos(alpha), np.sin(alpha)])
        return self.canonicalize(pts), np.full(n_angle, TWO_PI * rho / n_angle)

    def uniform_points(self, n, rng):
        return rng.random((n, 2))

    def random_in_balls(self, centers, radius, rng):
        return self.canonicalize(_flat_random_in_balls(_as_points(centers, 2), radius, rng))

    def low_discrepancy_points(self, n, seed=None):
        pts = _kronecker_sequence(n, 2)
        if seed is not None:
            pts = pts + np.random.default_rng(seed).random(2)
        return self.canonicalize(pts)

    def grid_points(self, nu, L):
        n = max(1, int(math.ceil(nu * L - 1e-9)))
        return self._lattice(n)

    def probe_grid(self, spacing):
        return self._lattice(max(4, int(math.ceil(1.0 / spacing - 1e-9))))

    @staticmethod
    def _lattice(n: int) -> np.ndarray:
        axis = np.arange(n, dtype=float) / n
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @property
    def base_point(self):
        return np.zeros(2)

    def distance_probe(self, n):
        t = np.linspace(0.0, 0.5 * SQRT2, n)
        rays = [np.column_stack([t * math.cos(a), t * math.sin(a)]) for a in (0.0, math.pi / 4, 0.3)]
        return self.canonicalize(np.vstack(rays))


@dataclass(frozen=True)
class Sphere2(SpectralManifold):
    """The unit round sphere; modes are real orthonormal spherical harmonics."""

    name: str = field(default="sphere2", init=False)
    dimension: int = field(default=2, init=False)
    chart_dim: int = field(default=2, init=False)
    total_volume: float = field(default=4.0 * math.pi, init=False)
    max_radius: float = field(default=math.pi, init=False)

    @staticmethod
    def max_degree(L: float) -> int:
        """Largest l with l(l+1) ≤ L²."""
        bound = L * L * (1.0 + 2.0 * FREQUENCY_TOLERANCE)
        l = int(math.floor(math.sqrt(bound)))
        while l * (l + 1) > bound:
            l -= 1
        return l

    def _mode_candidates(self, L):
        for l in range(self.max_degree(L) + 1):
            for m in range(-l, l + 1):
                yield float(l * (l + 1)), (l, m), (l, m)

    def _evaluate(self, basis, points):
        theta, phi = points[:, 0], points[:, 1]
        x = np.cos(theta)
        s = np.sin(theta)
        n = len(points)
        columns = {(int(l), int(m)): i for i, (l, m) in enumerate(basis.table)}
        lmax = int(basis.table[:, 0].max())
        out = np.empty((n, len(basis)))

        def _store(l: int, m: int, p: np.ndarray) -> None:
            if m == 0:
                out[:, columns[(l, 0)]] = p
            else:
                out[:, columns[(l, m)]] = SQRT2 * p * np.cos(m * phi)
                out[:, columns[(l, -m)]] = SQRT2 * p * np.sin(m * phi)

        # normalized associated Legendre recurrence, one order m at a time
        p_mm = np.full(n, 1.0 / math.sqrt(4.0 * math.pi))
        for m in range(lmax + 1):
            if m > 0:
                p_mm = p_mm * math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s
            _store(m, m, p_mm)
            p_prev2 = np.zeros(n)
            p_prev = p_mm
            a_prev = 1.0
            for l in range(m + 1, lmax + 1):
                a_lm = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                if l == m + 1:
                    p = a_lm * x * p_prev
                else:
                    p = a_lm * (x * p_prev - p_prev2 / a_prev)
                _store(l, m, p)
                p_prev2, p_prev, a_prev = p_prev, p, a_lm
        return out

    @staticmethod
    def to_unit_vectors(points: np.ndarray) -> np.ndarray:
        theta = np.asarray(points, float)[..., 0]
        phi = np.asarray(points, float)[..., 1]
        st = np.sin(theta)
        return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)

    @staticmethod
    def from_unit_vectors(v: np.ndarray) -> np.ndarray:
        v = v / np.linalg.norm(v, axis=-1, keepdims=True)
        theta = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), TWO_PI)
        phi[phi >= TWO_PI] = 0.0
        return np.stack([theta, phi], axis=-1)

    @staticmethod
    def _frame(center: np.ndarray) -> np.ndarray:
        """Rotation taking the north pole to center."""
        theta0, phi0 = float(center[0]), float(center[1])
        ct, st = math.cos(theta0), math.sin(theta0)
        cp, sp = math.cos(phi0), math.sin(phi0)
        ry = np.array([[ct, 0.0, st], [0.0, 1.0, 0.0], [-st, 0.0, ct]])
        rz = np.array([[cp, -sp, 0.0], [sp, cp, 0.0], [0.0, 0.0, 1.0]])
        return rz @ ry

    def canonicalize(self, points):
        pts = _as_points(points, 2)
        theta = np.mod(pts[:, 0], TWO_PI)
        phi = pts[:, 1].copy()
        # colatitude past a pole continues on the opposite meridian
        flip = theta > math.pi
        theta[flip] = TWO_PI - theta[flip]
        phi[flip] += math.pi
        phi = np.mod(phi, TWO_PI)
        phi[phi >= TWO_PI] = 0.0
        return np.column_stack([theta, phi])

    def paired_distances(self, z, w):
        u = self.to_unit_vectors(z)
        v = self.to_unit_vectors(w)
        cross = np.linalg.norm(np.cross(u, v), axis=-1)
        dot = np.sum(u * v, axis=-1)
        return np.arctan2(cross, dot)

    def metric_inverse_diag(self, points):
        pts = _as_points(points, 2)
        s = np.sin(pts[:, 0])
        return np.column_stack([np.ones(len(pts)), 1.0 / (s * s)])

    def closed_ball_volume(self, r):
        return TWO_PI * (1.0 - math.cos(r))

    def _global_rule(self, max_frequency):
        lstar = self.max_degree(max_frequency)
        x, wx = special.roots_legendre(lstar + 1)
        n_phi = 2 * lstar + 2
        phi = TWO_PI * np.arange(n_phi) / n_phi
        theta = np.arccos(x)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        weights = np.outer(wx, np.full(n_phi, TWO_PI / n_phi)).ravel()
        return QuadratureRule(
            np.column_stack([tt.ravel(), pp.ravel()]),
            weights,
            f"Gauss-Legendre {lstar + 1} x uniform {n_phi}, exact to degree {2 * lstar}",
        )

    def _local_to_chart(self, center: np.ndarray, cos_rho: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        sin_rho = np.sqrt(np.clip(1.0 - cos_rho * cos_rho, 0.0, None))
        local = np.column_stack([sin_rho * np.cos(alpha), sin_rho * np.sin(alpha), cos_rho])
        return self.from_unit_vectors(local @ self._frame(center).T)

    def geodesic_sphere(self, center, rho, n_angle):
        alpha = TWO_PI * np.arange(n_angle) / n_angle
        pts = self._local_to_chart(np.asarray(center, float), np.full(n_angle, math.cos(rho)), alpha)
        return pts, np.full(n_angle, TWO_PI * math.sin(rho) / n_angle)

    def _ball_rule(self, center, r, resolution):
        # Gauss-Legendre in cos(rho) integrates polynomial integrands exactly
        n_radial, n_angle = resolution
        t, wt = _gauss_legendre(n_radial, math.cos(r), 1.0)
        alpha = TWO_PI * np.arange(n_angle) / n_angle
        tt, aa = np.meshgrid(t, alpha, indexing="ij")
        pts = self._local_to_chart(np.asarray(center, float), tt.ravel(), aa.ravel())
        weights = np.outer(wt, np.full(n_angle, TWO_PI / n_angle)).ravel()
        return QuadratureRule(pts, weights, f"cap Gauss-Legendre {n_radial}x{n_angle}, radius {r!r}")

    def uniform_points(self, n, rng):
        u = rng.random((n, 2))
        theta = np.arccos(1.0 - 2.0 * u[:, 0])
        return np.column_stack([theta, TWO_PI * u[:, 1]])

    def random_in_balls(self, centers, radius, rng):
        centers = _as_points(centers, 2)
        n = len(centers)
        cos_rho = 1.0 - rng.random(n) * (1.0 - math.cos(radius))
        alpha = TWO_PI * rng.random(n)
        sin_rho = np.sqrt(np.clip(1.0 - cos_rho * cos_rho, 0.0, None))
        local = np.column_stack([sin_rho * np.cos(alpha), sin_rho * np.sin(alpha), cos_rho])
        frames = np.stack([self._frame(c) for c in centers])
        return self.from_unit_vectors(np.einsum("nij,nj->ni", frames, local))

    def low_discrepancy_points(self, n, seed=None):
        # golden section spiral
        inc = math.pi * (3.0 - math.sqrt(5.0))
        k = np.arange(n, dtype=float)
        z = 1.0 - (2.0 * k + 1.0) / n
        phi = k * inc
        if seed is not None:
            phi = phi + TWO_PI * np.random.default_rng(seed).random()
        pts = np.column_stack([np.arccos(np.clip(z, -1.0, 1.0)), np.mod(phi, TWO_PI)])
        return self.canonicalize(pts)

    def grid_points(self, nu, L):
        return self.low_discrepancy_points(max(1, int(math.ceil((nu * L) ** 2 - 1e-9))))

    def probe_grid(self, spacing):
        n_theta = max(4, int(math.ceil(math.pi / spacing - 1e-9)))
        theta = (np.arange(n_theta) + 0.5) * math.pi / n_theta
        phi = TWO_PI * np.arange(2 * n_theta) / (2 * n_theta)
        tt, pp = np.meshgrid(theta, phi, indexing="ij")
        return np.column_stack([tt.ravel(), pp.ravel()])

    @property
    def base_point(self):
        return np.zeros(2)

    def distance_probe(self, n):
        theta = np.linspace(0.0, math.pi, n)
        rays = [np.column_stack([theta, np.full(n, a)]) for a in (0.0, 1.0, 2.5)]
        return np.vstack(rays)


@dataclass(frozen=True)
class ProductManifold(SpectralManifold):
    """Riemannian product A × B; λ² = λ_A² + λ_B² and d² = d_A² + d_B²."""

    first: SpectralManifold
    second: SpectralManifold
    name: str = field(init=False)
    dimension: int = field(init=False)
    chart_dim: int = field(init=False)
    total_volume: float = field(init=False)
    max_radius: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "name", f"product({self.first.name},{self.second.name})")
        object.__setattr__(self, "dimension", self.first.dimension + self.second.dimension)
        object.__setattr__(self, "chart_dim", self.first.chart_dim + self.second.chart_dim)
        object.__setattr__(self, "total_volume", self.first.total_volume * self.second.total_volume)
        object.__setattr__(self, "max_radius", min(self.first.max_radius, self.second.max_radius))

    def split(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(points, float)
        d = self.first.chart_dim
        return pts[..., :d], pts[..., d:]

    def _mode_candidates(self, L):
        basis_a = eigenbasis(self.first, L)
        basis_b = eigenbasis(self.second, L)
        bound = L * L * (1.0 + 2.0 * FREQUENCY_TOLERANCE)
        for ia, mode_a in enumerate(basis_a.modes):
            for ib, mode_b in enumerate(basis_b.modes):
                lam2 = mode_a.frequency ** 2 + mode_b.frequency ** 2
                if lam2 <= bound:
                    yield lam2, (mode_a.descriptor, mode_b.descriptor), (ia, ib)

    def _evaluate(self, basis, points):
        pa, pb = self.split(points)
        phi_a = evaluate_basis(self.first, eigenbasis(self.first, basis.bandwidth), pa)
        phi_b = evaluate_basis(self.second, eigenbasis(self.second, basis.bandwidth), pb)
        return phi_a[:, basis.table[:, 0]] * phi_b[:, basis.table[:, 1]]

    def canonicalize(self, points):
        pa, pb = self.split(_as_points(points, self.chart_dim))
        return np.hstack([self.first.canonicalize(pa), self.second.canonicalize(pb)])

    def paired_distances(self, z, w):
        za, zb = self.split(z)
        wa, wb = self.split(w)
        da = self.first.paired_distances(za, wa)
        db = self.second.paired_distances(zb, wb)
        return np.sqrt(da * da + db * db)

    def metric_inverse_diag(self, points):
        pa, pb = self.split(_as_points(points, self.chart_dim))
        return np.hstack([self.first.metric_inverse_diag(pa), self.second.metric_inverse_diag(pb)])

    def closed_ball_volume(self, r):
        return None

    def _global_rule(self, max_frequency):
        rule_a = self.first._global_rule(max_frequency)
        rule_b = self.second._global_rule(max_frequency)
        na, nb = len(rule_a), len(rule_b)
        nodes = np.hstack([np.repeat(rule_a.nodes, nb, axis=0), np.tile(rule_b.nodes, (na, 1))])
        weights = np.outer(rule_a.weights, rule_b.weights).ravel()
        return QuadratureRule(nodes, weights, f"tensor of ({rule_a.exactness}) and ({rule_b.exactness})")

    def geodesic_sphere(self, center, rho, n_angle, n_split: int = 16):
        # the product sphere splits the radius as (rho sin psi, rho cos psi)
        ca, cb = self.split(np.asarray(center, float))
        psis, w_psi = _gauss_legendre(n_split, 0.0, 0.5 * math.pi)
        nodes: List[np.ndarray] = []
        weights: List[np.ndarray] = []
        for psi, wp in zip(psis, w_psi):
            pa, wa = self.first.geodesic_sphere(ca, rho * math.sin(psi), n_angle)
            pb, wb = self.second.geodesic_sphere(cb, rho * math.cos(psi), n_angle)
            nodes.append(np.hstack([np.repeat(pa, len(pb), axis=0), np.tile(pb, (len(pa), 1))]))
            weights.append(wp * rho * np.outer(wa, wb).ravel())
        return np.vstack(nodes), np.concatenate(weights)

    def _ball_rule(self, center, r, resolution):
        reduced = (max(8, resolution[0] // 4), max(8, resolution[1] // 4))
        return super()._ball_rule(center, r, reduced)

    def uniform_points(self, n, rng):
        return np.hstack([self.first.uniform_points(n, rng), self.second.uniform_points(n, rng)])

    def random_in_balls(self, centers, radius, rng):
        centers = _as_points(centers, self.chart_dim)
        ca, cb = self.split(centers)
        out = np.empty_like(centers)
        pending = np.arange(len(centers))
        while len(pending):
            sa = self.first.random_in_balls(ca[pending], radius, rng)
            sb = self.second.random_in_balls(cb[pending], radius, rng)
            da = self.first.paired_distances(sa, ca[pending])
            db = self.second.paired_distances(sb, cb[pending])
            ok = da * da + db * db <= radius * radius
            out[pending[ok]] = np.hstack([sa[ok], sb[ok]])
            pending = pending[~ok]
        return out

    def low_discrepancy_points(self, n, seed=None):
        pa = self.first.low_discrepancy_points(n, seed)
        pb = self.second.low_discrepancy_points(n, None if seed is None else seed + 1)
        # decorrelate the two index sequences
        pb = pb[np.argsort(_kronecker_sequence(n, 1)[:, 0], kind="stable")]
        return np.hstack([pa, pb])

    def grid_points(self, nu, L):
        return _tensor(self.first.grid_points(nu, L), self.second.grid_points(nu, L))

    def probe_grid(self, spacing):
        return _tensor(self.first.probe_grid(spacing), self.second.probe_grid(spacing))

    @property
    def base_point(self):
        return np.concatenate([self.first.base_point, self.second.base_point])

    def distance_probe(self, n):
        pa = self.first.distance_probe(n)
        pb = self.second.distance_probe(n)
        m = min(len(pa), len(pb))
        return np.hstack([pa[:m], pb[:m]])


def _tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.hstack([np.repeat(a, len(b), axis=0), np.tile(b, (len(a), 1))])


_BASE_KINDS = {"circle": Circle, "torus2": Torus2, "sphere2": Sphere2}


def _split_top_level(text: str) -> List[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ConfigError(f"unbalanced parentheses in manifold string {text!r}")
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth != 0:
        raise ConfigError(f"unbalanced parentheses in manifold string {text!r}")
    parts.append(text[start:])
    return parts


def create_manifold(spec: str) -> SpectralManifold:
    """
    Build a manifold from its selection string.

    Grammar: ``circle | torus2 | sphere2 | product(<manifold>,<manifold>)``.

    Raises:
        ConfigError: If the string does not parse
        UnimplementedManifoldError: If it names a manifold without closed-form eigendata
    """
    text = "".join(str(spec).split()).lower()
    if text in _BASE_KINDS:
        return _BASE_KINDS[text]()
    if text in _UNSUPPORTED_KINDS:
        raise UnimplementedManifoldError(f"manifold {text!r} has no closed-form eigenbasis in this lab")
    if text.startswith("product(") and text.endswith(")"):
        parts = _split_top_level(text[len("product("):-1])
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"product takes exactly two factors: {spec!r}")
        return ProductManifold(create_manifold(parts[0]), create_manifold(parts[1]))
    raise ConfigError(f"invalid manifold string {spec!r}")


@functools.lru_cache(maxsize=128)
def _cached_eigenbasis(M: SpectralManifold, L: float) -> EigenBasis:
    rows = sorted(M._mode_candidates(L), key=lambda row: _sort_key(row[0], row[1]))
    modes = tuple(
        Mode(index=i, frequency=math.sqrt(lam2), descriptor=descriptor)
        for i, (lam2, descriptor, _) in enumerate(rows)
    )
    frequencies = np.array([mode.frequency for mode in modes])
    table = np.array([row[2] for row in rows], dtype=int)
    frequencies.setflags(write=False)
    table.setflags(write=False)
    logger.debug(f"eigenbasis {M.name} L={L}: k_L={len(modes)}")
    return EigenBasis(M, float(L), modes, frequencies, table)


def eigenbasis(M: SpectralManifold, L: float) -> EigenBasis:
    """
    Return all eigenpairs with λ ≤ L, sorted by (λ, mode descriptor).

    Raises:
        InvalidParameterError: If L < 1
        UnimplementedManifoldError: If M is not a catalogue manifold
    """
    if not isinstance(M, SpectralManifold):
        raise UnimplementedManifoldError(f"unsupported manifold kind {type(M).__name__}")
    if not L >= 1:
        raise InvalidParameterError(f"bandwidth must be at least 1, got {L}")
    return _cached_eigenbasis(M, float(L))


def evaluate_basis(M: SpectralManifold, basis: EigenBasis, points: np.ndarray) -> np.ndarray:
    """Matrix Φ with Φ[j, i] = φ_i(z_j)."""
    pts = _as_points(points, M.chart_dim)
    if len(pts) == 0:
        return np.zeros((0, len(basis)))
    return M._evaluate(basis, pts)


def evaluate_mode(M: SpectralManifold, mode: Mode, z: np.ndarray) -> float:
    """φ_i(z) for one mode of ``eigenbasis(M, mode.frequency)``."""
    basis = eigenbasis(M, max(1.0, mode.frequency))
    for candidate in basis.modes:
        if candidate.descriptor == mode.descriptor:
            return float(evaluate_basis(M, basis, z)[0, candidate.index])
    raise InvalidParameterError(f"mode {mode.descriptor} does not belong to {M.name}")


def geodesic_distance(M: SpectralManifold, z: np.ndarray, w: np.ndarray) -> float:
    return float(M.paired_distances(_as_points(z, M.chart_dim)[0], _as_points(w, M.chart_dim)[0]))


def pairwise_distances(M: SpectralManifold, Z: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Distance matrix D[i, j] = d(Z_i, W_j), assembled in row blocks."""
    Z = _as_points(Z, M.chart_dim)
    W = _as_points(W, M.chart_dim)
    out = np.empty((len(Z), len(W)))
    block = max(1, _BLOCK_ENTRIES // max(1, len(W)))
    for start in range(0, len(Z), block):
        stop = start + block
        out[start:stop] = M.paired_distances(Z[start:stop, None, :], W[None, :, :])
    return out


def nearest_distances(M: SpectralManifold, Z: np.ndarray, W: np.ndarray) -> np.ndarray:
    """For each row of Z, the distance to the closest row of W."""
    Z = _as_points(Z, M.chart_dim)
    W = _as_points(W, M.chart_dim)
    out = np.empty(len(Z))
    block = max(1, _BLOCK_ENTRIES // max(1, len(W)))
    for start in range(0, len(Z), block):
        stop = start + block
        out[start:stop] = M.paired_distances(Z[start:stop, None, :], W[None, :, :]).min(axis=1)
    return out


def minimum_separation(M: SpectralManifold, Z: np.ndarray) -> float:
    """Exact minimum pairwise distance; +inf for fewer than two points."""
    Z = _as_points(Z, M.chart_dim)
    if len(Z) < 2:
        return math.inf
    best = math.inf
    block = max(1, _BLOCK_ENTRIES // len(Z))
    for start in range(0, len(Z), block):
        stop = min(start + block, len(Z))
        d = M.paired_distances(Z[start:stop, None, :], Z[None, :, :])
        rows = np.arange(stop - start)
        d[rows, rows + start] = np.inf
        best = min(best, float(d.min()))
    return best


def ball_volume(M: SpectralManifold, center: np.ndarray, r: float) -> float:
    """
    Volume of the geodesic ball B(center, r).

    Raises:
        RadiusTooLargeError: If r is beyond the manifold's closed-form regime
    """
    M.check_radius(r)
    closed = M.closed_ball_volume(r)
    if closed is not None:
        return closed
    return ball_quadrature(M, center, r).total_weight


def global_quadrature(M: SpectralManifold, max_frequency: float) -> QuadratureRule:
    """Rule integrating products of two modes with λ ≤ max_frequency exactly."""
    if not max_frequency >= 1:
        raise InvalidParameterError(f"max_frequency must be at least 1, got {max_frequency}")
    return M._global_rule(float(max_frequency))


def ball_quadrature(
    M: SpectralManifold,
    center: np.ndarray,
    r: float,
    resolution: Tuple[int, int] = DEFAULT_BALL_RESOLUTION,
) -> QuadratureRule:
    """
    Polar rule over B(center, r).

    The weight sum is checked against the closed-form volume; on failure the
    resolution doubles, at most three times.

    Raises:
        RadiusTooLargeError: If r is beyond the closed-form regime
        NumericalIntegrityError: If the weight check still fails after doubling
    """
    M.check_radius(r)
    center = _as_points(center, M.chart_dim)[0]
    expected = M.closed_ball_volume(r)
    res = (int(resolution[0]), int(resolution[1]))
    for attempt in range(4):
        rule = M._ball_rule(center, float(r), res)
        if expected is None:
            return rule
        if abs(rule.total_weight - expected) <= BALL_WEIGHT_TOLERANCE * max(1.0, expected):
            return rule
        logger.warning(
            f"ball rule {res} on {M.name} misses volume {expected} by "
            f"{abs(rule.total_weight - expected):.3e}; doubling resolution"
        )
        res = (2 * res[0], 2 * res[1])
    raise NumericalIntegrityError(f"ball quadrature on {M.name} failed its volume check at radius {r}")


def unit_ball_volume(m: int) -> float:
    """σ_m, the volume of the Euclidean unit ball in R^m."""
    return math.pi ** (m / 2.0) / special.gamma(m / 2.0 + 1.0)


def weyl_ratio(M: SpectralManifold, L: float) -> float:
    """k_L (2π)^m / (vol(M) σ_m L^m); tends to 1 as L grows."""
    m = M.dimension
    k = len(eigenbasis(M, L))
    return k * TWO_PI ** m / (M.total_volume * unit_ball_volume(m) * L ** m)
