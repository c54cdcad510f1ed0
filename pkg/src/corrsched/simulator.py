"""Frame-level simulation of the allocator on a wrap-around network.

Every frame: power limits from the interference profiles, rates from the
previous frame's measured interference, per-cell channel assignment,
interference measurement, realised rates and distortions.  Reported
distortions are per coding block of ``run.block_frames`` frames: the
min-max split of every group at the block's average realised rates.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import grouping as grp
from .config import ExperimentConfig
from .errors import DegenerateModelError, SimulationError, SolverError
from .geometry import build_topology
from .icon import IconState, achievable_rate, interference_contributions, transmit_power
from .rd_region import GroupedRegions, entropy_terms
from .scheduling import (RunningAverages, assign_by_cell, dpf_scores, frame_counts, opt_assign,
                         pf_scores, update_averages)
from .source_stats import SourceModel, covariance

log = logging.getLogger(__name__)

COMPLIANCE_RTOL = 1e-12


@dataclass
class Metrics:
    """Outcome of one run.  Arrays are indexed by global source id."""

    config: ExperimentConfig
    cell_of: np.ndarray
    rate_series: np.ndarray  # (frames, N) realised rate, bits per sample
    block_distortion_db: np.ndarray  # (blocks, N)
    distortion_db: np.ndarray  # (N,) 10 log10 of the mean block distortion
    mean_rate: np.ndarray  # (N,)
    utility_series: np.ndarray  # (periods, K) worst mean distortion per cell
    ipp_violation: np.ndarray  # (frames,) bool
    pmin_floored: np.ndarray  # (frames,) bool, some active transmission hit P_MIN
    iot_db: float = math.nan
    min_rd_slack: float = math.inf
    groupings: list = field(default_factory=list)
    opt_iterations: int = 0

    @property
    def num_frames(self):
        return len(self.rate_series)

    def distortion_cdf(self):
        return empirical_cdf(self.distortion_db)

    def rate_cdf(self):
        return empirical_cdf(self.mean_rate)

    def percentiles(self):
        """Percentile table; empty for a run without frames."""
        if self.num_frames == 0:
            return {}
        d, r = self.distortion_db, self.mean_rate
        return {
            "distortion_p95_db": percentile(d, 0.95),
            "distortion_p50_db": percentile(d, 0.50),
            "distortion_p5_db": percentile(d, 0.05),
            "distortion_mean_db": float(10 * np.log10(np.mean(10 ** (d / 10)))),
            "rate_p5": percentile(r, 0.05),
            "rate_p50": percentile(r, 0.50),
            "rate_mean": float(np.mean(r)),
            "iot_db": self.iot_db,
            "ipp_violation_frames": int(self.ipp_violation.sum()),
            "pmin_floored_frames": int(self.pmin_floored.sum()),
            "compliant_violation_frames": int((self.ipp_violation & ~self.pmin_floored).sum()),
            "min_rd_slack": self.min_rd_slack,
        }


def empirical_cdf(samples):
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    return x, np.arange(1, n + 1) / n if n else np.zeros(0)


def percentile(samples, p):
    """Nearest-rank percentile (``p`` a fraction in [0, 1])."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rank = max(1, math.ceil(round(p * x.size, 9)))
    return float(x[rank - 1])


def compare(configs, runner=None):
    """Paired comparison table; deltas are against the first config.

    Returns ``(rows, warnings)``.  Each row holds the 95th-percentile
    distortion, 5th-percentile and mean rate, and dB deltas.
    """
    runner = runner or run
    notes = []
    cfgs = [c.config if isinstance(c, Metrics) else c for c in configs]
    seeds = {c.run.seed for c in cfgs}
    topos = {repr(asdict(c.topology)) for c in cfgs}
    if len(seeds) > 1 or len(topos) > 1:
        notes.append("configs do not share topology and seed; comparison is not paired")
    rows, ref = [], None
    for k, cfg in enumerate(configs):
        m = cfg if isinstance(cfg, Metrics) else runner(cfg)
        table = m.percentiles()
        row = {"index": k, "digest": m.config.digest()[:12],
               "distortion_p95_db": table.get("distortion_p95_db", math.nan),
               "rate_p5": table.get("rate_p5", math.nan),
               "rate_mean": table.get("rate_mean", math.nan)}
        if ref is None:
            ref = row
        row["delta_distortion_p95_db"] = row["distortion_p95_db"] - ref["distortion_p95_db"]
        row["delta_rate_p5_db"] = _db_ratio(row["rate_p5"], ref["rate_p5"])
        row["delta_rate_mean_db"] = _db_ratio(row["rate_mean"], ref["rate_mean"])
        rows.append(row)
    return rows, notes


def _db_ratio(a, b):
    if not (a > 0 and b > 0):
        return math.nan
    return float(10 * np.log10(a / b))


def seed_sequence(seed, *key):
    """Independent stream for one consumer (topology, grouping of a cell...)."""
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def make_topology(config):
    t = config.topology
    return build_topology(t.num_cells, t.site_distance, t.users_per_cell,
                          rng_seed=seed_sequence(config.run.seed, 0))


def source_model(config):
    s = config.source_model
    return SourceModel(s.variance, s.theta, s.mean)


def build_regions(groups, topo, model):
    """Region data for a partition; groups whose covariance is singular are
    decoded independently instead (with a warning)."""
    final, terms = [], []
    for g in groups:
        g = tuple(int(s) for s in g)
        try:
            cov = covariance(topo.positions[list(g)], model, member_ids=g, topo=topo)
            t = entropy_terms(g, cov)
        except DegenerateModelError:
            warnings.warn(f"group {g} has a singular covariance; decoding members independently",
                          RuntimeWarning, stacklevel=2)
            for s in g:
                cov = covariance(topo.positions[[s]], model, member_ids=(s,), topo=topo)
                final.append((s,))
                terms.append(entropy_terms((s,), cov))
            continue
        final.append(g)
        terms.append(t)
    return GroupedRegions(final, terms, topo.num_sources)


def local_regions(regions, ids):
    """Restrict network-wide region data to one cell, renumbering sources."""
    loc = {int(s): k for k, s in enumerate(ids)}
    groups, terms = [], []
    for gi, g in enumerate(regions.groups):
        if g[0] in loc:
            groups.append(tuple(loc[s] for s in g))
            terms.append(regions.region(gi, np.zeros(len(g))).entropy_terms)
    return GroupedRegions(groups, terms, len(ids))


class _FrameLoop:
    def __init__(self, config, topo, model, regions, scheduler_kind):
        self.cfg, self.topo, self.model, self.regions = config, topo, model, regions
        self.kind = scheduler_kind
        r, ic = config.radio, config.icon
        self.C = r.num_subbands
        self.K, self.N = topo.num_cells, topo.num_sources
        self.bc = r.subband_hz
        self.n0 = r.noise_psd_w_hz
        self.spf = r.samples_per_frame
        self.icon = IconState(topo, ic.mode, self.C, ic.c_hir, ic.p_h, ic.p_l, ic.alpha, ic.beta)
        self.gain_own = topo.gains[np.arange(self.N), topo.cell_of]
        self.cell_rows = [np.array(c.source_ids) for c in topo.cells]
        self.chans = np.arange(self.C)[None, :]
        self._refresh_powers()
        if scheduler_kind == "opt":
            self.local = [local_regions(regions, rows) for rows in self.cell_rows]
            self.owners = [None] * self.K

    def _refresh_powers(self):
        r = self.cfg.radio
        limits = self.icon.power_limits()
        self.powers = transmit_power(limits, r.p_min_w, r.p_max_w)
        self.floored = limits < r.p_min_w
        self.caps = self.icon.cap_tensor() if self.icon.mode != "reuse1" else None

    def _rates(self, powers, gains, interference):
        return achievable_rate(powers, gains, self.n0, self.bc, interference) / self.spf

    def _opt_plan(self, rates_star, averages, frame):
        T = self.cfg.scheduler.opt_period
        plan = np.empty((T, self.K, self.C), dtype=np.int64)
        for k, rows in enumerate(self.cell_rows):
            local_avg = RunningAverages(averages.rate[rows], averages.distortion[rows],
                                        averages.window)
            try:
                frac = opt_assign(rates_star[rows], self.local[k], local_avg, T,
                                  source_ids=rows, cell_id=k, owner_hint=self.owners[k])
            except SolverError as exc:
                raise SimulationError(f"cell {k}: {exc}", frame=frame) from exc
            self.opt_iterations += frac.iterations
            self.owners[k] = np.argmax(frac.shares, axis=0)
            counts = frame_counts(frac.shares, T)
            for c in range(self.C):
                plan[:, k, c] = np.repeat(rows, counts[:, c])
        return plan

    def run(self, frames, record=True):
        cfg = self.cfg
        N, K, C = self.N, self.K, self.C
        sc, ic = cfg.scheduler, cfg.icon
        averages = RunningAverages.initial(N, cfg.source_model.variance, sc.window)
        prev_interference = np.zeros((K, C))
        block = cfg.run.block_frames
        T = sc.opt_period
        self.opt_iterations = 0

        rate_series = np.zeros((frames, N))
        blocks = []
        utilities = []
        violation = np.zeros(frames, dtype=bool)
        floored_f = np.zeros(frames, dtype=bool)
        iot_sum, min_slack = 0.0, math.inf
        block_rate = np.zeros(N)
        block_len = 0
        period_rate = np.zeros(N)
        period_len = 0
        util_acc = np.zeros(N)
        util_len = 0
        plan = None

        for f in range(frames):
            try:
                if ic.mode == "adaptive" and f > 0 and f % ic.adaptation_period == 0:
                    per_source = util_acc / max(util_len, 1)
                    u = np.array([per_source[rows].max() for rows in self.cell_rows])
                    utilities.append(u)
                    self.icon.adapt(u)
                    self._refresh_powers()
                    util_acc[:] = 0.0
                    util_len = 0

                rates_star = self._rates(self.powers, self.gain_own[:, None],
                                         prev_interference[self.topo.cell_of])
                if self.kind == "pf":
                    scores = pf_scores(rates_star, averages.rate, sc.alpha)
                    assign = assign_by_cell(scores, self.cell_rows)
                elif self.kind == "dpf":
                    cand = self.regions.candidate_delta_sum(rates_star)
                    scores = dpf_scores(cand, self.regions.group_of,
                                        np.log2(averages.distortion), sc.alpha)
                    assign = assign_by_cell(scores, self.cell_rows, maximize=False)
                else:
                    if f % T == 0:
                        plan = self._opt_plan(rates_star, averages, f)
                    assign = plan[f % T]

                p_act = self.powers[assign, self.chans]
                contrib = interference_contributions(self.topo, assign, self.powers)
                interference = contrib.sum(axis=1)
                if self.caps is not None:
                    violation[f] = bool(np.any(contrib > self.caps * (1 + COMPLIANCE_RTOL)))
                    floored_f[f] = bool(np.any(self.floored[assign, self.chans]))
                iot_sum += float(np.mean(interference)) / (self.n0 * self.bc)

                r_chan = self._rates(p_act, self.gain_own[assign], interference)
                realized = np.bincount(assign.ravel(), weights=r_chan.ravel(), minlength=N)
                rate_series[f] = realized

                frame_dist = np.exp2(2.0 * self.regions.deltas(realized))
                util_acc += frame_dist
                util_len += 1
                if self.kind == "opt":
                    period_rate += realized
                    period_len += 1
                    if period_len == T or f == frames - 1:
                        avg_rate = period_rate / period_len
                        d = np.exp2(2.0 * self.regions.deltas(avg_rate))
                        averages = update_averages(averages, avg_rate, distortions=d,
                                                   weight=min(1.0, period_len / sc.window))
                        period_rate[:] = 0.0
                        period_len = 0
                else:
                    averages = update_averages(averages, realized, distortions=frame_dist)

                block_rate += realized
                block_len += 1
                if record and (block_len == block or f == frames - 1):
                    avg_rate = block_rate / block_len
                    deltas = self.regions.deltas(avg_rate)
                    min_slack = min(min_slack, self.regions.min_slack(avg_rate, deltas))
                    blocks.append(deltas)
                    block_rate[:] = 0.0
                    block_len = 0
                prev_interference = interference
            except SimulationError:
                raise
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                raise SimulationError(str(exc), frame=f) from exc

        block_d = np.exp2(2.0 * np.array(blocks)) if blocks else np.zeros((0, N))
        with np.errstate(divide="ignore"):
            return dict(
                rate_series=rate_series,
                block_distortion_db=10 * np.log10(block_d),
                distortion_db=(10 * np.log10(block_d.mean(axis=0)) if blocks else np.zeros(0)),
                mean_rate=rate_series.mean(axis=0) if frames else np.zeros(0),
                utility_series=np.array(utilities).reshape(-1, K),
                ipp_violation=violation,
                pmin_floored=floored_f,
                iot_db=float(10 * np.log10(1 + iot_sum / frames)) if frames else math.nan,
                min_rd_slack=min_slack,
            )


def make_groupings(config, topo, model):
    """Per-cell groupings; a distortion-based grouping first runs the
    independent-decoding warm-up to measure baseline rates."""
    g = config.grouping
    if g.method == "none" or g.group_size == 1:
        return [grp.singleton_grouping(c) for c in topo.cells]
    n_outer = g.n_outer or None
    if g.method == "distance":
        return [grp.distance_op(c, g.group_size, g.trials, n_outer,
                                seed_sequence(config.run.seed, 1, c.id))
                for c in topo.cells]
    singles = build_regions([(s,) for s in range(topo.num_sources)], topo, model)
    warm = _FrameLoop(config, topo, model, singles, "pf").run(g.warmup_frames, record=False)
    baseline = warm["mean_rate"] if g.warmup_frames else np.zeros(topo.num_sources)
    rates = {int(s): float(baseline[s]) for s in range(topo.num_sources)}
    return [grp.distortion_op(c, rates, model, g.group_size, g.trials, n_outer,
                              seed_sequence(config.run.seed, 1, c.id), topo=topo)
            for c in topo.cells]


def run(config):
    """Simulate ``config.run.frames`` frames and collect metrics."""
    topo = make_topology(config)
    model = source_model(config)
    frames = config.run.frames
    if frames == 0:
        empty = np.zeros(0)
        return Metrics(config, np.asarray(topo.cell_of), np.zeros((0, topo.num_sources)),
                       np.zeros((0, topo.num_sources)), empty, empty,
                       np.zeros((0, topo.num_cells)), np.zeros(0, bool), np.zeros(0, bool))
    groupings = make_groupings(config, topo, model)
    regions = build_regions([g for gr in groupings for g in gr.groups], topo, model)
    loop = _FrameLoop(config, topo, model, regions, config.scheduler.kind)
    log.info("running %d frames (%s, %s, group size %d)", frames, config.icon.mode,
             config.scheduler.kind, config.grouping.group_size)
    out = loop.run(frames)
    return Metrics(config, np.asarray(topo.cell_of), groupings=groupings,
                   opt_iterations=loop.opt_iterations, **out)
