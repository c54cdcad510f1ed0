import itertools
import math

import numpy as np
import pytest

from corrsched.rd_region import HALF_LOG2_2PIE, GroupedRegions, membership
from corrsched.scheduling import (AllocationMatrix, FractionalAllocation, RunningAverages,
                                  dpf_assign, dpf_scores, frame_counts, opt_assign, opt_lp,
                                  period_objective, pf_assign, round_allocation, update_averages)
from corrsched.simplex import check_optimality, solve_lp
from corrsched.source_stats import SourceModel, covariance, joint_entropy

from oracles import largest_remainder

MODEL = SourceModel(10.0, 100.0)


def regions(groups, pts):
    return GroupedRegions.build(groups, np.asarray(pts, float), MODEL)


def averages(n, rate=1.0, distortion=10.0, window=100.0):
    return RunningAverages(np.full(n, float(rate)), np.full(n, float(distortion)), window)


# ----- PF ---------------------------------------------------------------------------------

def test_pf_single_source_takes_all():
    a = pf_assign(np.array([[0.3, 0.0, 2.0]]), averages(1), source_ids=[7])
    assert list(a.assign) == [7, 7, 7]


def test_pf_dominance_and_ties():
    R = np.array([[1.0, 1.0, 1.0, 2.0], [1.0, 1.0, 1.0, 1.0]])
    a = pf_assign(R, averages(2))
    assert a.assign[3] == 0
    assert list(a.assign[:3]) == [0, 0, 0]  # ties to the lower id
    R[1, 3] = 3.0
    assert pf_assign(R, averages(2)).assign[3] == 1


def test_pf_alpha_zero_is_max_rate():
    rng = np.random.default_rng(0)
    R = rng.uniform(0, 5, (4, 6))
    avg = RunningAverages(rng.uniform(0.1, 3, 4), np.full(4, 10.0))
    assert list(pf_assign(R, avg, alpha=0.0).assign) == list(np.argmax(R, axis=0))


def test_pf_all_zero_channel_goes_to_lowest_id():
    R = np.array([[0.0, 1.0], [0.0, 2.0]])
    assert pf_assign(R, averages(2), source_ids=[4, 9]).assign[0] == 4


def test_pf_favours_starved_source():
    R = np.ones((2, 3))
    avg = RunningAverages(np.array([2.0, 0.5]), np.full(2, 10.0))
    assert list(pf_assign(R, avg).assign) == [1, 1, 1]


# ----- D-PF -------------------------------------------------------------------------------

def test_dpf_singletons_match_pf_with_equal_averages():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n, C = 5, 7
        pts = rng.uniform(0, 100, (n, 2))
        gr = regions([(i,) for i in range(n)], pts)
        R = rng.uniform(0, 3, (n, C))
        avg = RunningAverages(np.full(n, rng.uniform(0.2, 2)), np.full(n, rng.uniform(1, 10)))
        assert list(dpf_assign(gr, R, avg).assign) == list(pf_assign(R, avg).assign)


def test_dpf_tie_to_lower_id():
    pts = [[0, 0], [1000, 0]]
    gr = regions([(0,), (1,)], pts)
    R = np.full((2, 3), 1.5)
    assert list(dpf_assign(gr, R, averages(2)).assign) == [0, 0, 0]


def test_dpf_deprioritises_source_with_well_served_partner():
    cand = np.array([[1.0], [1.0], [1.0]])
    group_of = np.array([0, 0, 1])
    high = dpf_scores(cand, group_of, np.array([3.0, 3.0, 3.0]), alpha=1.0)
    low = dpf_scores(cand, group_of, np.array([3.0, -2.0, 3.0]), alpha=1.0)
    assert low[0, 0] > high[0, 0]  # larger score = less likely (argmin)
    assert low[2, 0] == high[2, 0]


def test_dpf_candidate_gives_partner_zero_rate():
    pts = [[0, 0], [40, 0]]
    gr = regions([(0, 1)], pts)
    R = np.array([[2.0], [0.5]])
    a = dpf_assign(gr, R, averages(2))
    # with equal averages the larger own rate lowers the group's total distortion more
    assert a.assign[0] == 0


# ----- OPT --------------------------------------------------------------------------------

def test_opt_single_source_single_channel():
    pts = [[0, 0]]
    gr = regions([(0,)], pts)
    R = np.array([[1.7]])
    frac = opt_assign(R, gr, averages(1, distortion=10.0), period_frames=2)
    assert frac.shares[0, 0] == pytest.approx(2.0)
    cov = covariance(pts, MODEL)
    assert frac.deltas[0] == pytest.approx(-1.7 + joint_entropy([0], cov) - HALF_LOG2_2PIE)


def test_opt_symmetric_pair_equalises():
    gr = regions([(0,), (1,)], [[0, 0], [500, 0]])
    R = np.array([[3.0, 1.0], [1.0, 3.0]])
    avg = averages(2)
    frac = opt_assign(R, gr, avg, period_frames=10)
    level = frac.deltas + avg.log_distortion
    assert level[0] == pytest.approx(level[1], abs=1e-9)
    np.testing.assert_allclose(frac.shares.sum(axis=0), [10, 10])


def _closed_form_objective(rates, groups, terms, dbar):
    """max over groups and subsets of (b_S + sum_S dbar) / |S| for batched rates."""
    worst = np.full(rates.shape[0], -np.inf)
    for grp, E in zip(groups, terms):
        M = membership(len(grp))
        g = list(grp)
        B = E[None, :] - rates[:, g] @ M.T + (dbar[g] @ M.T)[None, :]
        val = B[:, 1:] / M[1:].sum(axis=1)
        worst = np.maximum(worst, val.max(axis=1))
    return worst


def _tiny_instance(rng):
    n = int(rng.integers(1, 4))
    C = int(rng.integers(1, 5))
    pts = rng.uniform(0, 120, (n, 2))
    if n == 3 and rng.random() < 0.5:
        groups = [(0, 1, 2)]
    elif n >= 2 and rng.random() < 0.7:
        groups = [(0, 1)] + [(k,) for k in range(2, n)]
    else:
        groups = [(k,) for k in range(n)]
    R = rng.uniform(0, 3, (n, C)) * (rng.random((n, C)) < 0.85)
    avg = RunningAverages(np.full(n, 1.0), rng.uniform(0.5, 10, n))
    return pts, groups, R, avg


def test_opt_relaxation_bound_and_rounding_on_tiny_instances():
    rng = np.random.default_rng(2024)
    T = 2
    for _ in range(200):
        pts, groups, R, avg = _tiny_instance(rng)
        n, C = R.shape
        gr = regions(groups, pts)
        frac = opt_assign(R, gr, avg, period_frames=T)
        dbar = avg.log_distortion
        terms = [gr.region(gi, np.zeros(len(g))).entropy_terms for gi, g in enumerate(groups)]
        # exhaustive integer schedules: per channel a composition of T frames over n sources
        comps = [c for c in itertools.product(range(T + 1), repeat=n) if sum(c) == T]
        combos = np.array(list(itertools.product(comps, repeat=C)))  # (K, C, n)
        rates = np.einsum("kcn,nc->kn", combos, R) / T
        best_int = _closed_form_objective(rates, groups, terms, dbar).min()
        assert frac.objective <= best_int + 1e-9
        # the LP objective itself matches the closed form at its own rates
        lp_rates = (frac.shares * R).sum(axis=1) / T
        assert frac.objective == pytest.approx(
            _closed_form_objective(lp_rates[None], groups, terms, dbar)[0], abs=1e-8)
        assert frac.objective == pytest.approx(period_objective(lp_rates, gr, dbar), abs=1e-8)
        # rounding: exclusive and share-conserving
        plan = round_allocation(frac)
        assert len(plan) == T
        counts = np.zeros((n, C), dtype=int)
        for a in plan:
            assert a.assign.shape == (C,)
            for c, s in enumerate(a.assign):
                counts[s, c] += 1
        np.testing.assert_array_equal(counts.sum(axis=0), np.full(C, T))
        assert np.all(np.abs(counts - frac.shares) < 1 + 1e-9)


def test_opt_lp_row_count_and_certificate():
    rng = np.random.default_rng(3)
    pts = rng.uniform(0, 120, (6, 2))
    groups = [(0, 1, 2), (3, 4), (5,)]
    gr = regions(groups, pts)
    R = rng.uniform(0, 2, (6, 5))
    avg = RunningAverages(np.ones(6), rng.uniform(1, 10, 6))
    cost, A_ub, b_ub, A_eq, b_eq, bounds = opt_lp(R, gr, avg.log_distortion, 10)
    assert A_ub.shape[0] == 7 + 3 + 1
    assert A_eq.shape[0] == 5
    res = solve_lp(cost, A_ub, b_ub, A_eq, b_eq, bounds=bounds)
    assert check_optimality(res)
    frac = opt_assign(R, gr, avg, period_frames=10)
    assert frac.objective == pytest.approx(res.fun, abs=1e-9)


def test_opt_deterministic():
    rng = np.random.default_rng(4)
    pts, groups, R, avg = _tiny_instance(rng)
    gr = regions(groups, pts)
    a = opt_assign(R, gr, avg, period_frames=5)
    b = opt_assign(R, gr, avg, period_frames=5)
    np.testing.assert_array_equal(a.shares, b.shares)


# ----- rounding and averages --------------------------------------------------------------

def test_round_full_share():
    frac = FractionalAllocation(0, (3, 8), np.array([[4.0, 0.0], [0.0, 4.0]]), 4)
    plan = round_allocation(frac)
    assert [list(a.assign) for a in plan] == [[3, 8]] * 4


def test_round_half_split():
    frac = FractionalAllocation(0, (0, 1), np.array([[1.5], [0.5]]), 2)
    assert [int(a.assign[0]) for a in round_allocation(frac)] == [0, 1]


def test_frame_counts_match_exact_apportionment():
    rng = np.random.default_rng(5)
    for _ in range(300):
        n, T = int(rng.integers(1, 5)), int(rng.integers(1, 11))
        w = rng.dirichlet(np.ones(n))
        shares = np.round(w * T, 6)
        shares[-1] = T - shares[:-1].sum()
        shares = np.clip(shares, 0, T)
        counts = frame_counts(shares[:, None], T)[:, 0]
        assert counts.sum() == T
        assert counts.tolist() == largest_remainder(shares, T)


def test_allocation_helpers():
    a = AllocationMatrix(0, 0, np.array([2, 5, 2]))
    assert list(a.channels_of(2)) == [0, 2]
    np.testing.assert_array_equal(a.indicator([2, 5]), [[1, 0, 1], [0, 1, 0]])


def test_average_update_arithmetic():
    avg = RunningAverages(np.array([1.0]), np.array([4.0]), window=10.0)
    out = update_averages(avg, [2.0], distortions=[2.0])
    assert out.distortion[0] == pytest.approx(3.8)
    assert out.rate[0] == pytest.approx(1.1)


def test_window_one_tracks_latest():
    avg = RunningAverages(np.array([1.0]), np.array([4.0]), window=1.0)
    out = update_averages(avg, [0.3], distortions=[7.0])
    assert out.rate[0] == 0.3 and out.distortion[0] == 7.0


def test_constant_input_converges_geometrically():
    avg = RunningAverages(np.array([0.0]), np.array([10.0]), window=5.0)
    errs = []
    for _ in range(30):
        avg = update_averages(avg, [2.0], distortions=[1.0])
        errs.append(abs(avg.distortion[0] - 1.0))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    np.testing.assert_allclose(ratios, 0.8)
    assert avg.rate[0] == pytest.approx(2.0, abs=0.01)


def test_default_distortions_use_minmax_split():
    gr = regions([(0, 1)], [[0, 0], [30, 0]])
    avg = averages(2, window=1.0)
    out = update_averages(avg, [1.0, 0.5], group_regions=gr)
    np.testing.assert_allclose(out.distortion, np.exp2(2 * gr.deltas(np.array([1.0, 0.5]))))


def test_initial_averages():
    avg = RunningAverages.initial(3, 10.0)
    assert np.all(avg.distortion == 10.0) and np.all(avg.rate > 0)
    assert avg.log_distortion[0] == pytest.approx(0.5 * math.log2(10.0))
