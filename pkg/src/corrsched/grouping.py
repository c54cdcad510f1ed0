"""Partition a cell's sources into joint-decoding groups.

Both heuristics seed each group with a random source among the ``n_outer``
remaining sources farthest from the base station (outer priority), repeat
for ``trials`` independent initialisations and keep the best partition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateModelError
from .rd_region import build_region, minmax_split
from .source_stats import covariance


@dataclass(frozen=True)
class Grouping:
    cell_id: int
    groups: tuple[tuple[int, ...], ...]
    group_size: int
    score: float = 0.0

    @property
    def members(self):
        return sorted(s for g in self.groups for s in g)


def default_n_outer(population):
    return max(1, math.ceil(population / 3))


def trial_rng(rng_seed, trial):
    """Generator for one trial; trial ``t`` is the same whatever the trial count."""
    entropy = rng_seed.entropy if isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    key = rng_seed.spawn_key if isinstance(rng_seed, np.random.SeedSequence) else ()
    return np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=tuple(key) + (trial,)))


def _cell_arrays(cell):
    ids = np.array([s.id for s in cell.sources], dtype=np.int64)
    pos = np.array([s.position for s in cell.sources], dtype=float).reshape(-1, 2)
    return ids, pos, np.asarray(cell.center, dtype=float)


def _pick_outer(remaining, dist_center, n_outer, rng):
    order = sorted(remaining, key=lambda k: (-dist_center[k], k))
    outer = order[:min(n_outer, len(order))]
    return outer[int(rng.integers(len(outer)))], outer


def singleton_grouping(cell):
    return Grouping(cell.id, tuple((s.id,) for s in cell.sources), 1)


def distance_op(cell, group_size=2, trials=20, n_outer=None, rng_seed=0, return_trace=False):
    """Distance-based grouping with outer priority.

    Each trial attaches to the seed source its ``group_size - 1`` nearest
    remaining neighbours; the partition with the smallest total
    intra-group pairwise distance wins.
    """
    ids, pos, center = _cell_arrays(cell)
    n = len(ids)
    if group_size <= 1 or n <= 1:
        return singleton_grouping(cell)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n_outer = n_outer or default_n_outer(n)
    dc = np.linalg.norm(pos - center, axis=1)
    dd = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    best, best_score, trace = None, np.inf, []
    for t in range(trials):
        rng = trial_rng(rng_seed, t)
        remaining = list(range(n))
        groups, seeds = [], []
        while remaining:
            seed, outer = _pick_outer(remaining, dc, n_outer, rng)
            seeds.append((seed, tuple(outer)))
            others = sorted((k for k in remaining if k != seed), key=lambda k: (dd[seed, k], k))
            grp = [seed] + others[:group_size - 1]
            groups.append(grp)
            remaining = [k for k in remaining if k not in grp]
        score = sum(dd[a, b] for g in groups for a, b in combinations(g, 2))
        trace.append((score, seeds))
        if score < best_score:
            best_score, best = score, groups
    result = Grouping(cell.id, tuple(tuple(int(ids[k]) for k in g) for g in best),
                      group_size, float(best_score))
    return (result, trace) if return_trace else result


def distortion_op(cell, rates_baseline, model, group_size=2, trials=20, n_outer=None,
                  rng_seed=0, topo=None):
    """Distortion-based grouping with outer priority.

    ``rates_baseline`` maps global source id -> rate measured under
    independent decoding.  Each seed source is paired with the partner
    giving the lowest predicted worst distortion of the pair (then, for
    groups of three, the best third member given the pair); a trial is
    scored by the worst predicted distortion in the cell.
    """
    ids, pos, center = _cell_arrays(cell)
    n = len(ids)
    if group_size <= 1 or n <= 1:
        return singleton_grouping(cell)
    n_outer = n_outer or default_n_outer(n)
    rates = np.array([rates_baseline[int(i)] for i in ids], dtype=float)
    cov = covariance(pos, model, member_ids=range(n), topo=topo)
    dc = np.linalg.norm(pos - center, axis=1)
    cache = {}

    def worst(group):
        key = tuple(sorted(group))
        if key not in cache:
            try:
                region = build_region(key, rates[list(key)], cov)
                cache[key] = float(np.max(minmax_split(region, method="exact")))
            except DegenerateModelError:
                cache[key] = np.inf
        return cache[key]

    best, best_score = None, np.inf
    for t in range(trials):
        rng = trial_rng(rng_seed, t)
        remaining = list(range(n))
        groups = []
        while remaining:
            seed, _ = _pick_outer(remaining, dc, n_outer, rng)
            grp = [seed]
            while len(grp) < group_size:
                cand = [k for k in remaining if k not in grp]
                if not cand:
                    break
                scored = [(worst(grp + [k]), k) for k in cand]
                finite = [sk for sk in scored if np.isfinite(sk[0])]
                grp.append(min(finite or scored)[1])
            groups.append(grp)
            remaining = [k for k in remaining if k not in grp]
        score = max(worst(g) for g in groups)
        if best is None or score < best_score:
            best_score, best = score, groups
    return Grouping(cell.id, tuple(tuple(int(ids[k]) for k in g) for g in best),
                    group_size, float(best_score))


def is_partition(grouping, source_ids):
    flat = [s for g in grouping.groups for s in g]
    return len(flat) == len(set(flat)) and set(flat) == set(source_ids)


def grouping_rows(groupings):
    """``(cell_id, group_index, member ids)`` rows for CSV export."""
    return [(g.cell_id, j, " ".join(str(s) for s in grp))
            for g in groupings for j, grp in enumerate(g.groups)]
