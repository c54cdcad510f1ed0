"""Intra-cell channel assignment.

PF and D-PF pick one source per channel every frame; OPT solves a
time-sharing LP once per period and rounds the shares into whole frames.
Log-distortions use ``Delta = 1/2 log2 D`` throughout, including the
running-average term of the OPT objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rd_region import membership
from .simplex import solve_lp

RATE_FLOOR = 1e-6  # initial average rate, keeps the PF denominator positive


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    cell_id: int
    frame_index: int
    assign: np.ndarray  # channel -> source id

    def channels_of(self, source_id):
        return np.flatnonzero(self.assign == source_id)

    def indicator(self, source_ids):
        """Binary ``a[i, c]`` over the given source order."""
        ids = np.asarray(source_ids)
        return (ids[:, None] == self.assign[None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class FractionalAllocation:
    cell_id: int
    source_ids: tuple[int, ...]
    shares: np.ndarray  # (n, C), each column sums to period_frames
    period_frames: int
    objective: float = np.nan
    deltas: np.ndarray | None = None
    iterations: int = 0
    basis: tuple | None = None  # (basis, at_upper) for warm starts


@dataclass
class RunningAverages:
    rate: np.ndarray
    distortion: np.ndarray
    window: float = 100.0

    @classmethod
    def initial(cls, n, variance, window=100.0, rate_floor=RATE_FLOOR):
        return cls(np.full(n, rate_floor), np.full(n, float(variance)), float(window))

    @property
    def log_distortion(self):
        """``1/2 log2`` of the averaged distortion."""
        return 0.5 * np.log2(self.distortion)

    def copy(self):
        return RunningAverages(self.rate.copy(), self.distortion.copy(), self.window)


def pf_scores(rates_star, avg_rate, alpha):
    """``log R* - alpha log R_bar``; ``-inf`` for zero rates."""
    with np.errstate(divide="ignore"):
        return np.log(rates_star) - alpha * np.log(avg_rate)[:, None]


def dpf_scores(candidate_delta_sum, group_of, avg_log2_distortion, alpha):
    """log2 of the D-PF product ``D*_i / D_bar_i^a * prod_j D*_j / D_bar_j^a``.

    ``candidate_delta_sum[i, c]`` is the sum over ``i``'s group of the
    log-distortions when ``i`` alone transmits on ``c``; the averaged term is
    summed over the same group.
    """
    group_of = np.asarray(group_of)
    group_avg = np.bincount(group_of, weights=avg_log2_distortion)
    return 2.0 * candidate_delta_sum - alpha * group_avg[group_of][:, None]


def assign_by_cell(scores, cell_slices, maximize=True):
    """Per cell and channel the best row; ties go to the first (lowest id) row.

    ``cell_slices`` lists, for every cell, the row indices of its sources in
    ascending id order.  Returns ``(K, C)`` row indices.
    """
    out = np.empty((len(cell_slices), scores.shape[1]), dtype=np.int64)
    s = scores if maximize else -scores
    for k, rows in enumerate(cell_slices):
        rows = np.asarray(rows)
        out[k] = rows[np.argmax(s[rows], axis=0)]
    return out


def pf_assign(rates_star, averages, alpha=3.5, source_ids=None, cell_id=0, frame_index=0):
    """Proportional fair: per channel ``argmax R*_{i,c} / R_bar_i^alpha``."""
    R = np.asarray(rates_star, dtype=float)
    ids = np.arange(len(R)) if source_ids is None else np.asarray(source_ids)
    rows = assign_by_cell(pf_scores(R, averages.rate, alpha), [np.arange(len(R))])[0]
    return AllocationMatrix(cell_id, frame_index, ids[rows])


def dpf_assign(group_regions, rates_star, averages, alpha=3.5, source_ids=None, cell_id=0,
               frame_index=0):
    """Distortion proportional fair; ``group_regions`` is a GroupedRegions over
    the same (local) source indices as ``rates_star`` rows."""
    R = np.asarray(rates_star, dtype=float)
    ids = np.arange(len(R)) if source_ids is None else np.asarray(source_ids)
    cand = group_regions.candidate_delta_sum(R)
    scores = dpf_scores(cand, group_regions.group_of, 2.0 * averages.log_distortion, alpha)
    rows = assign_by_cell(scores, [np.arange(len(R))], maximize=False)[0]
    return AllocationMatrix(cell_id, frame_index, ids[rows])


def opt_lp(rates_star, group_regions, avg_log_distortion, period_frames):
    """Matrices of the relaxed min-max problem for one cell.

    Variables are the shares ``a[i, c]`` (row-major) followed by the level
    ``t``.  Setting ``Delta_i = t - Delta_bar_i`` removes the per-source
    distortion variables, so each region constraint reads::

        sum_{i in S} sum_c a[i,c] R*[i,c] / T + |S| t
            >= h(S|G\\S) - |S|/2 log2(2 pi e) + sum_{i in S} Delta_bar_i

    The constraint matrices are returned in sparse (CSR) form.
    """
    R = np.asarray(rates_star, dtype=float)
    n, C = R.shape
    T = float(period_frames)
    nv = n * C + 1
    dbar = np.asarray(avg_log_distortion, dtype=float)
    r_idx, c_idx, vals, rhs = [], [], [], []
    row = 0
    for gi, grp in enumerate(group_regions.groups):
        E = group_regions.region(gi, np.zeros(len(grp))).entropy_terms
        M = membership(len(grp))
        for mask in range(1, 2 ** len(grp)):
            members = [grp[k] for k in range(len(grp)) if M[mask, k]]
            for i in members:
                r_idx.append(np.full(C, row))
                c_idx.append(np.arange(i * C, (i + 1) * C))
                vals.append(-R[i] / T)
            r_idx.append([row])
            c_idx.append([nv - 1])
            vals.append([-float(len(members))])
            rhs.append(-(E[mask] + dbar[members].sum()))
            row += 1
    A_ub = sp.csr_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))),
                         shape=(row, nv))
    cols = np.arange(n * C)
    A_eq = sp.csr_matrix((np.ones(n * C), (cols % C, cols)), shape=(C, nv))
    b_eq = np.full(C, T)
    cost = np.zeros(nv)
    cost[-1] = 1.0
    bounds = [(0.0, T)] * (n * C) + [(None, None)]
    return cost, A_ub, np.array(rhs), A_eq, b_eq, bounds


def greedy_owners(rates_star, group_regions, avg_log_distortion, period_frames):
    """Whole-channel max-min heuristic: channels are handed out one at a time,
    each to the source with the currently worst ``Delta_i + Delta_bar_i``,
    which takes its best free channel."""
    R = np.asarray(rates_star, dtype=float)
    n, C = R.shape
    owner = np.full(C, -1, dtype=np.int64)
    rates = np.zeros(n)
    free = np.ones(C, dtype=bool)
    offsets = np.asarray(avg_log_distortion, dtype=float)
    for _ in range(C):
        level = shifted_deltas(group_regions, rates, offsets) + offsets
        for i in np.argsort(-level, kind="stable"):
            row = np.where(free, R[i], -np.inf)
            c = int(np.argmax(row))
            if R[i, c] > 0 or i == n - 1:
                break
        owner[c] = i
        free[c] = False
        rates[i] += R[i, c]
    return owner


def crash_basis(owner, A_ub, b_ub, period_frames):
    """Feasible starting basis for ``opt_lp`` from whole-channel owners.

    The owner's share of every channel is basic (at ``T``), ``t`` is basic in
    the most demanding region row and all other region rows keep their
    slacks.
    """
    owner = np.asarray(owner)
    C = len(owner)
    A = sp.csr_matrix(A_ub)
    nv = A.shape[1]
    x = np.zeros(nv)
    cols = owner * C + np.arange(C)
    x[cols] = period_frames
    t_coef = A[:, nv - 1].toarray().ravel()
    need = (b_ub - A @ x) / t_coef  # t >= need for every row
    r_star = int(np.argmax(need))
    slacks = [nv + r for r in range(len(b_ub)) if r != r_star]
    return np.array(list(cols) + [nv - 1] + slacks, dtype=np.intp), float(need[r_star])


def opt_assign(rates_star, group_regions, averages, period_frames=10, source_ids=None,
               cell_id=0, warm_start=None, owner_hint=None):
    """OPT: LP relaxation of the min-max channel assignment over one period.

    Minimises ``max_i (Delta_i + Delta_bar_i)`` with ``Delta_bar = 1/2 log2
    D_bar``; the shares of every channel sum to ``period_frames`` and the
    per-frame rate of source ``i`` is ``sum_c a[i,c] R*[i,c] / T``.
    ``warm_start`` is an optional ``(basis, at_upper)`` pair from a previous
    solve of the same cell; the returned allocation carries its own.
    ``owner_hint`` (one source row per channel, e.g. the previous period's
    main holders) competes with the greedy start; the start with the lower
    initial level is used.
    """
    R = np.asarray(rates_star, dtype=float)
    n, C = R.shape
    ids = tuple(range(n)) if source_ids is None else tuple(int(s) for s in source_ids)
    dbar = averages.log_distortion
    cost, A_ub, b_ub, A_eq, b_eq, bounds = opt_lp(R, group_regions, dbar, period_frames)
    starts = [warm_start] if warm_start is not None else []
    crashes = [crash_basis(greedy_owners(R, group_regions, dbar, period_frames), A_ub, b_ub,
                           period_frames)]
    if owner_hint is not None:
        crashes.append(crash_basis(owner_hint, A_ub, b_ub, period_frames))
    starts.append((min(crashes, key=lambda bt: bt[1])[0], None))
    res = solve_lp(cost, A_ub, b_ub, A_eq, b_eq, bounds=bounds, starts=starts)
    shares = np.clip(res.x[:-1].reshape(n, C), 0.0, period_frames)
    rates = (shares * R).sum(axis=1) / period_frames
    deltas = shifted_deltas(group_regions, rates, dbar)
    return FractionalAllocation(cell_id, ids, shares, int(period_frames), float(res.x[-1]),
                                deltas, res.iterations, (res.basis, res.at_upper))


def shifted_deltas(group_regions, rates, offsets):
    """Lexicographic min-max of ``Delta_i + offsets_i`` inside every group's
    region at ``rates``; returns the ``Delta`` vector."""
    rates = np.asarray(rates, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    out = np.empty(len(rates))
    for n, (members, E) in group_regions._classes.items():
        M = membership(n)
        B = E + (offsets[members] - rates[members]) @ M.T
        out[members] = group_regions._solve(n, B) - offsets[members]
    return out


def period_objective(rates, group_regions, avg_log_distortion):
    """``min max_i (Delta_i + Delta_bar_i)`` at fixed per-frame rates."""
    d = shifted_deltas(group_regions, np.asarray(rates, float), np.asarray(avg_log_distortion))
    return float(np.max(d + avg_log_distortion))


def round_allocation(frac, frame_offset=0):
    """Whole-frame schedule for one period from fractional shares.

    Per channel each source gets ``floor(share)`` frames; leftover frames go
    to the largest fractional remainders (ties: fewer frames so far, then
    lower id).  Frames are handed out in contiguous blocks in source order.
    """
    shares = np.asarray(frac.shares, dtype=float)
    n, C = shares.shape
    T = frac.period_frames
    ids = np.asarray(frac.source_ids)
    counts = frame_counts(shares, T)
    plan = np.empty((T, C), dtype=np.int64)
    for c in range(C):
        plan[:, c] = np.repeat(ids, counts[:, c])
    return [AllocationMatrix(frac.cell_id, frame_offset + f, plan[f]) for f in range(T)]


def frame_counts(shares, T):
    """Largest-remainder apportionment of every channel column to ``T`` frames."""
    shares = np.asarray(shares, dtype=float)
    n, C = shares.shape
    base = np.floor(shares + 1e-9).astype(np.int64)
    base = np.minimum(base, T)
    counts = base.copy()
    for c in range(C):
        left = T - counts[:, c].sum()
        while left < 0:
            # numerical overshoot; trim the largest holder
            k = int(np.argmax(counts[:, c]))
            counts[k, c] -= 1
            left += 1
        if left:
            rem = shares[:, c] - base[:, c]
            order = sorted(range(n), key=lambda i: (-round(rem[i], 12), counts[i, c], i))
            for i in order[:left]:
                counts[i, c] += 1
    return counts


def update_averages(averages, realized_rates, group_regions=None, distortions=None, weight=None):
    """Exponential update of the averaged rate and distortion.

    Realised distortions default to the min-max split of each group at the
    realised rates.  ``weight`` defaults to ``1 / window``.
    """
    rates = np.asarray(realized_rates, dtype=float)
    if distortions is None:
        distortions = np.exp2(2.0 * group_regions.deltas(rates))
    w = 1.0 / averages.window if weight is None else float(weight)
    w = min(max(w, 0.0), 1.0)
    return RunningAverages(w * rates + (1 - w) * averages.rate,
                           w * np.asarray(distortions, float) + (1 - w) * averages.distortion,
                           averages.window)
