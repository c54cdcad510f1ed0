"""High-resolution Slepian-Wolf rate-distortion region in log-distortion space.

With ``Delta_i = 1/2 log2 D_i`` every constraint of the region is linear::

    sum_{i in S} Delta_i >= h(S | G \\ S) - |S|/2 log2(2 pi e) - sum_{i in S} R_i

for every non-empty subset ``S`` of the joint-decoding group ``G``.
Subsets are addressed by bitmask over the group's member order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .simplex import solve_lp
from .source_stats import LOG2_2PIE, covariance, equicorrelated_covariance, joint_entropy

HALF_LOG2_2PIE = 0.5 * LOG2_2PIE


@lru_cache(maxsize=None)
def membership(n):
    """(2**n, n) 0/1 matrix; row ``mask`` marks the members of subset ``mask``."""
    masks = np.arange(2 ** n)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(float)


@lru_cache(maxsize=None)
def _popcount(n):
    return membership(n).sum(axis=1)


def subset_members(mask, group):
    return tuple(g for k, g in enumerate(group) if mask >> k & 1)


@dataclass(frozen=True, eq=False)
class RdRegion:
    """Region of one group at fixed rates.

    ``entropy_terms[mask]`` holds ``h(S|G\\S) - |S|/2 log2(2 pi e)``
    (index 0 is the empty set and is zero).
    """

    group: tuple[int, ...]
    entropy_terms: np.ndarray
    rates: np.ndarray

    @property
    def size(self):
        return len(self.group)

    @property
    def masks(self):
        return range(1, 2 ** self.size)

    @property
    def subsets(self):
        return [subset_members(m, self.group) for m in self.masks]

    @property
    def bounds(self):
        """Right-hand side of every constraint, indexed by mask (0 -> 0)."""
        return self.entropy_terms - membership(self.size) @ self.rates

    @property
    def constraints(self):
        """List of ``(subset ids, coefficient row, rhs)`` with ``row @ Delta >= rhs``."""
        M, b = membership(self.size), self.bounds
        return [(subset_members(m, self.group), M[m], float(b[m])) for m in self.masks]

    def slack(self, deltas):
        """``row @ Delta - rhs`` for every non-empty subset."""
        d = np.asarray(deltas, dtype=float)
        return (membership(self.size) @ d - self.bounds)[1:]

    def with_rates(self, rates):
        return RdRegion(self.group, self.entropy_terms, np.asarray(rates, dtype=float))


def entropy_terms(group, cov):
    """Rate-independent part of every region constraint, indexed by mask."""
    n = len(group)
    h_all = joint_entropy(group, cov)
    terms = np.zeros(2 ** n)
    for mask in range(1, 2 ** n):
        s = subset_members(mask, group)
        rest = [g for g in group if g not in s]
        h_cond = h_all - joint_entropy(rest, cov) if rest else h_all
        terms[mask] = h_cond - len(s) * HALF_LOG2_2PIE
    return terms


def build_region(group, rates, cov):
    """Instantiate the ``2**|G| - 1`` constraints of one group at ``rates``."""
    group = tuple(int(g) for g in group)
    rates = np.asarray(rates, dtype=float).reshape(len(group))
    if np.any(rates < 0):
        raise ValueError("rates must be non-negative")
    return RdRegion(group, entropy_terms(group, cov), rates)


def _pair_closed_form(b):
    """Min-max split for two sources from the rhs vector ``b`` (mask-indexed).

    If ``b1 >= b3 - b1`` the first source is pinned by its own conditional
    bound and the second takes the rest of the sum bound; symmetric for the
    second source; otherwise both share the sum bound equally.
    """
    b1, b2, b3 = b[..., 1], b[..., 2], b[..., 3]
    first = b1 >= b3 - b1
    second = ~first & (b2 >= b3 - b2)
    half = 0.5 * b3
    d1 = np.where(first, b1, np.where(second, b3 - b2, half))
    d2 = np.where(first, b3 - b1, np.where(second, b2, half))
    return np.stack([d1, d2], axis=-1)


def leximin_batch(bounds, n, tol=1e-12):
    """Lexicographically min-max point of many regions at once.

    ``bounds`` has shape ``(batch, 2**n)`` (mask-indexed rhs, column 0 == 0).
    The rhs is supermodular in the subset, so the region is a contra-
    polymatroid and the optimum follows from repeatedly fixing the largest
    subset with the highest average bound and contracting it.
    """
    B = np.atleast_2d(np.asarray(bounds, dtype=float))
    batch = B.shape[0]
    full = 2 ** n - 1
    rows = np.arange(batch)
    card = _popcount(n)
    out = np.zeros((batch, n))
    fixed = np.zeros(batch, dtype=np.int64)
    b_fixed = np.zeros(batch)
    scale = tol * np.maximum(1.0, np.abs(B).max(axis=1))
    for _ in range(n):
        if np.all(fixed == full):
            break
        best = np.full(batch, -np.inf)
        best_mask = np.zeros(batch, dtype=np.int64)
        for mask in range(1, full + 1):
            valid = (fixed & mask) == 0
            val = (B[rows, mask | fixed] - b_fixed) / card[mask]
            larger = card[mask] > card[best_mask]
            take = valid & ((val > best + scale) | ((val >= best - scale) & larger))
            best = np.where(take, np.maximum(val, np.where(np.isfinite(best), best, val)), best)
            best_mask = np.where(take, mask, best_mask)
        active = best_mask != 0
        for k in range(n):
            hit = active & ((best_mask >> k) & 1).astype(bool)
            out[hit, k] = best[hit]
        fixed = fixed | best_mask
        b_fixed = B[rows, fixed]
    return out


def _lp_minmax(region):
    """Progressive filling with the simplex engine.

    Each round minimises the common level ``t`` of the not-yet-fixed
    components, then fixes every component that cannot go below ``t``.
    """
    n = region.size
    constraints = region.constraints
    A_ub = np.array([-row for _, row, _ in constraints])
    b_ub = np.array([-rhs for _, _, rhs in constraints])
    fixed = {}
    while len(fixed) < n:
        free = [k for k in range(n) if k not in fixed]
        bounds = [(fixed[k], fixed[k]) if k in fixed else (None, None) for k in range(n)]
        # variables: Delta (n), t
        level_rows = np.zeros((len(free), n + 1))
        for r, k in enumerate(free):
            level_rows[r, k], level_rows[r, n] = 1.0, -1.0
        A = np.vstack([np.hstack([A_ub, np.zeros((len(A_ub), 1))]), level_rows])
        b = np.concatenate([b_ub, np.zeros(len(free))])
        c = np.zeros(n + 1)
        c[n] = 1.0
        t = solve_lp(c, A, b, bounds=bounds + [(None, None)]).fun
        cap = [(fixed[k], fixed[k]) if k in fixed else (None, t) for k in range(n)]
        pinned = []
        for k in free:
            ck = np.zeros(n)
            ck[k] = 1.0
            low = solve_lp(ck, A_ub, b_ub, bounds=cap).fun
            if low >= t - 1e-9 * max(1.0, abs(t)):
                pinned.append(k)
        if not pinned:
            pinned = free
        for k in pinned:
            fixed[k] = t
    return np.array([fixed[k] for k in range(n)])


def minmax_split(region, method="auto"):
    """Log-distortions minimising the largest ``Delta_i`` inside ``region``.

    Among all min-max optima the lexicographic one is returned (after the
    largest component, the next largest is minimised, and so on), which
    makes the answer unique.

    ``method``: ``"auto"`` (closed form for one or two sources, simplex LP
    otherwise), ``"closed"``, ``"lp"`` or ``"exact"`` (batched
    contra-polymatroid decomposition, used by the simulator).
    """
    b = region.bounds
    n = region.size
    if method == "auto":
        method = "closed" if n <= 2 else "lp"
    if n == 1:
        return np.array([b[1]])
    if method == "closed":
        if n != 2:
            raise ValueError("closed form exists only for one or two sources")
        return _pair_closed_form(b)
    if method == "lp":
        return _lp_minmax(region)
    if method == "exact":
        return leximin_batch(b[None, :], n)[0]
    raise ValueError(f"unknown method {method!r}")


def delta_to_distortion(delta):
    return np.exp2(2.0 * np.asarray(delta, dtype=float))


def distortion_to_delta(distortion):
    return 0.5 * np.log2(np.asarray(distortion, dtype=float))


def delta_to_db(delta):
    """``10 log10 D`` for ``D = 2**(2 Delta)``."""
    return 20.0 * math.log10(2.0) * np.asarray(delta, dtype=float)


def group_size_gain(n, pairwise_distance, model):
    """Per-source log-distortion change ``(h(S) - sum h(X_i)) / n`` for ``n``
    equidistant sources; zero for ``n == 1`` and negative otherwise."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cov = equicorrelated_covariance(n, pairwise_distance, model)
    ids = list(range(n))
    joint = joint_entropy(ids, cov)  # raises DegenerateModelError when not PD
    marginals = sum(joint_entropy([i], cov) for i in ids)
    return (joint - marginals) / n


class GroupedRegions:
    """Region data for a whole partition, evaluated in batch.

    Groups of equal size are stacked so that the distortions of every
    source in the network come out of one vectorised call.
    """

    def __init__(self, groups, terms, num_sources):
        self.groups = [tuple(int(g) for g in grp) for grp in groups]
        self.num_sources = num_sources
        self.group_of = np.full(num_sources, -1, dtype=np.int64)
        self.position_in_group = np.zeros(num_sources, dtype=np.int64)
        for gi, grp in enumerate(self.groups):
            for k, sid in enumerate(grp):
                self.group_of[sid] = gi
                self.position_in_group[sid] = k
        self._classes = {}
        self._row = {}
        for n in sorted({len(g) for g in self.groups}):
            idx = [gi for gi, g in enumerate(self.groups) if len(g) == n]
            members = np.array([self.groups[gi] for gi in idx], dtype=np.int64)
            E = np.array([terms[gi] for gi in idx])
            self._classes[n] = (members, E)
            self._row.update({gi: r for r, gi in enumerate(idx)})

    @classmethod
    def build(cls, groups, positions, model, num_sources=None, topo=None):
        positions = np.asarray(positions, dtype=float)
        terms = []
        for grp in groups:
            cov = covariance(positions[list(grp)], model, member_ids=grp, topo=topo)
            terms.append(entropy_terms(tuple(grp), cov))
        return cls(groups, terms, num_sources or len(positions))

    def region(self, group_index, rates):
        grp = self.groups[group_index]
        E = self._classes[len(grp)][1]
        return RdRegion(grp, E[self._row[group_index]].copy(), np.asarray(rates, dtype=float))

    def _solve(self, n, B):
        if n == 1:
            return B[:, 1:2]
        if n == 2:
            return _pair_closed_form(B)
        return leximin_batch(B, n)

    def deltas(self, rates):
        """Min-max log-distortion of every source at per-source ``rates``."""
        rates = np.asarray(rates, dtype=float)
        out = np.empty(self.num_sources)
        for n, (members, E) in self._classes.items():
            B = E - rates[members] @ membership(n).T
            out[members] = self._solve(n, B)
        return out

    def min_slack(self, rates, deltas):
        """Smallest constraint slack over every group (>= 0 when feasible)."""
        rates, deltas = np.asarray(rates, float), np.asarray(deltas, float)
        worst = np.inf
        for n, (members, E) in self._classes.items():
            M = membership(n)
            B = E - rates[members] @ M.T
            slack = deltas[members] @ M.T - B
            worst = min(worst, slack[:, 1:].min())
        return worst

    def candidate_delta_sum(self, rates_star):
        """For every (source i, channel c): sum of the group's log-distortions
        when ``i`` gets rate ``rates_star[i, c]`` and its partners get zero."""
        R = np.asarray(rates_star, dtype=float)
        out = np.empty_like(R)
        for n, (members, E) in self._classes.items():
            M = membership(n)
            for k in range(n):
                sid = members[:, k]
                # rhs shift: only subsets containing member k lose R
                B = E[:, None, :] - R[sid][:, :, None] * M[:, k][None, None, :]
                shape = B.shape
                D = self._solve(n, B.reshape(-1, shape[-1]))
                out[sid] = D.sum(axis=1).reshape(shape[0], shape[1])
        return out
