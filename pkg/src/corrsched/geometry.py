"""Wrap-around hexagonal multi-cell layout, source placement and pathloss.

Cells are flat-top hexagons on a lattice with site-to-site distance ``D``.
Axial coordinates ``(q, r)`` use the unit vectors ``e_q`` (30 degrees) and
``e_r`` (90 degrees), both of length ``D``, so the six neighbours of a cell
are ``(+-1, 0)``, ``(0, +-1)``, ``(1, -1)`` and ``(-1, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MIN_DISTANCE = 1.0  # m; pathloss clamp

_SQRT3 = math.sqrt(3.0)
_NEIGHBOR_STEPS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))
# cluster size -> (rings, generating wrap shift in axial coordinates)
_CLUSTERS = {7: (1, (2, 1)), 19: (2, (3, 2))}


@dataclass(frozen=True, eq=False)
class Source:
    id: int
    cell_id: int
    position: np.ndarray
    gains: np.ndarray  # linear gain towards each base station, indexed by cell id


@dataclass(frozen=True, eq=False)
class Cell:
    id: int
    center: np.ndarray
    cell_type: int
    neighbors: tuple[int, ...]
    sources: tuple[Source, ...]
    axial: tuple[int, int] = (0, 0)

    @property
    def source_ids(self) -> list[int]:
        return [s.id for s in self.sources]


@dataclass(frozen=True, eq=False)
class Topology:
    cells: tuple[Cell, ...]
    site_distance: float
    wrap_vectors: np.ndarray  # (6, 2), metres
    positions: np.ndarray = field(repr=False)  # (N, 2)
    cell_of: np.ndarray = field(repr=False)  # (N,)
    gains: np.ndarray = field(repr=False)  # (N, K)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_sources(self) -> int:
        return len(self.positions)

    @property
    def centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cells])

    @property
    def cell_radius(self) -> float:
        return self.site_distance / _SQRT3

    @property
    def sources(self) -> list[Source]:
        return [s for c in self.cells for s in c.sources]

    def wrapped_distance(self, a, b):
        return wrapped_distance(a, b, self)


def axial_to_xy(q, r, site_distance):
    return np.array([site_distance * _SQRT3 / 2 * q, site_distance * (q / 2 + r)])


def hex_distance(q, r):
    return (abs(q) + abs(r) + abs(q + r)) // 2


def _rotate60(q, r):
    return -r, q + r


def wrap_shifts_axial(num_cells):
    """The six lattice translations that tile the plane with the cluster."""
    q, r = _CLUSTERS[num_cells][1]
    shifts = []
    for _ in range(6):
        shifts.append((q, r))
        q, r = _rotate60(q, r)
    return shifts


def _cluster_axial(rings):
    coords = [(q, r) for q in range(-rings, rings + 1) for r in range(-rings, rings + 1)
              if hex_distance(q, r) <= rings]

    def key(qr):
        x, y = axial_to_xy(qr[0], qr[1], 1.0)
        return hex_distance(*qr), round(math.atan2(x, y) % (2 * math.pi), 9)

    return sorted(coords, key=key)


def cell_type_of(q, r):
    """Canonical reuse-3 colouring, types 1..3."""
    return (q - r) % 3 + 1


def channel_gain(distance):
    """Linear gain for the ``30 log10 R`` pathloss, i.e. ``R**-3``.

    Distances below 1 m are clamped to 1 m.
    """
    d = np.maximum(np.asarray(distance, dtype=float), MIN_DISTANCE)
    out = d ** -3.0
    return float(out) if out.ndim == 0 else out


def in_hexagon(points, center, circumradius):
    """Containment test for a flat-top hexagon (boundary inclusive)."""
    p = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(center, dtype=float)
    x, y = np.abs(p[:, 0]), np.abs(p[:, 1])
    tol = 1e-9 * circumradius
    return (y <= circumradius * _SQRT3 / 2 + tol) & (_SQRT3 * x + y <= _SQRT3 * circumradius + tol)


def sample_in_hexagon(rng, n, center, circumradius):
    """Uniform points inside a flat-top hexagon by rejection from its bounding box."""
    out = np.empty((0, 2))
    half_h = circumradius * _SQRT3 / 2
    while len(out) < n:
        m = 2 * (n - len(out)) + 4
        cand = np.column_stack([rng.uniform(-circumradius, circumradius, m),
                                rng.uniform(-half_h, half_h, m)])
        cand = cand[in_hexagon(cand, (0.0, 0.0), circumradius)]
        out = np.vstack([out, cand])
    return out[:n] + np.asarray(center, dtype=float)


def _images(b, wrap_vectors):
    shifts = np.vstack([np.zeros((1, 2)), wrap_vectors])
    return np.asarray(b, dtype=float)[..., None, :] + shifts


def wrapped_distance(a, b, topo):
    """Minimum Euclidean distance from ``a`` to ``b`` over all wrap images of ``b``.

    Broadcasts over leading dimensions of ``a`` and ``b`` (last axis = x, y).
    """
    a = np.asarray(a, dtype=float)
    d = np.linalg.norm(a[..., None, :] - _images(b, topo.wrap_vectors), axis=-1).min(axis=-1)
    return float(d) if d.ndim == 0 else d


def pairwise_wrapped_distances(points_a, points_b, wrap_vectors):
    """(len(a), len(b)) wrapped distance matrix."""
    a = np.asarray(points_a, dtype=float)[:, None, None, :]
    b = _images(points_b, wrap_vectors)[None, :, :, :]
    return np.linalg.norm(a - b, axis=-1).min(axis=-1)


def build_topology(num_cells=19, site_distance=130.0, users_per_cell=18, rng_seed=0):
    """Build a wrap-around hex layout with uniformly dropped sources.

    Parameters
    ----------
    num_cells : int
        7 (one ring) or 19 (two rings).
    site_distance : float
        Base-station spacing in metres.
    users_per_cell : int
        Sources dropped uniformly inside each hexagon.
    rng_seed : int or numpy.random.SeedSequence
        Seed for the placement; identical seeds give bit-identical layouts.
    """
    if num_cells not in _CLUSTERS:
        raise ConfigurationError(f"unsupported num_cells {num_cells}; expected 7 or 19",
                                 key="topology.num_cells")
    if users_per_cell < 1:
        raise ConfigurationError("users_per_cell must be >= 1", key="topology.users_per_cell")
    if not site_distance > 0:
        raise ConfigurationError("site_distance must be positive", key="topology.site_distance")

    rings = _CLUSTERS[num_cells][0]
    axial = _cluster_axial(rings)
    index = {qr: k for k, qr in enumerate(axial)}
    shifts = wrap_shifts_axial(num_cells)
    wrap_vectors = np.array([axial_to_xy(q, r, site_distance) for q, r in shifts])
    centers = np.array([axial_to_xy(q, r, site_distance) for q, r in axial])

    def locate(q, r):
        for sq, sr in [(0, 0)] + shifts:
            k = index.get((q - sq, r - sr))
            if k is not None:
                return k
        raise AssertionError("wrap shifts do not cover the lattice")

    neighbors = [tuple(locate(q + dq, r + dr) for dq, dr in _NEIGHBOR_STEPS) for q, r in axial]

    rng = np.random.default_rng(rng_seed)
    radius = site_distance / _SQRT3
    positions = np.vstack([sample_in_hexagon(rng, users_per_cell, c, radius) for c in centers])
    cell_of = np.repeat(np.arange(num_cells), users_per_cell)
    gains = channel_gain(pairwise_wrapped_distances(positions, centers, wrap_vectors))

    for arr in (positions, cell_of, gains, wrap_vectors, centers):
        arr.setflags(write=False)

    cells = []
    for k, (q, r) in enumerate(axial):
        ids = range(k * users_per_cell, (k + 1) * users_per_cell)
        srcs = tuple(Source(i, k, positions[i], gains[i]) for i in ids)
        cells.append(Cell(k, centers[k], cell_type_of(q, r), neighbors[k], srcs, (q, r)))
    return Topology(tuple(cells), float(site_distance), wrap_vectors, positions, cell_of, gains)


def intra_cluster_adjacency(topo):
    """Neighbour pairs that are adjacent without using a wrap shift."""
    pairs = set()
    for cell in topo.cells:
        q, r = cell.axial
        for other in topo.cells:
            dq, dr = other.axial[0] - q, other.axial[1] - r
            if (dq, dr) in _NEIGHBOR_STEPS:
                pairs.add((min(cell.id, other.id), max(cell.id, other.id)))
    return sorted(pairs)
