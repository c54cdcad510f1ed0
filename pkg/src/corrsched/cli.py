"""Command-line entry point: run, compare and sweep experiments.

Examples
--------
::

    corrsched dump-defaults > my.toml
    corrsched run configs/ref_table1.toml --frames 500 --out results/ref
    corrsched compare configs/baseline.toml configs/threestep.toml --out results/cmp
    corrsched sweep configs/ref_table1.toml --param icon.p_l --values 1e-15,3e-15
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import tomli

from . import __version__
from .config import ExperimentConfig, dumps, parse_config, to_dict
from .errors import ConfigurationError, SimulationError, SolverError
from .grouping import grouping_rows
from .simulator import compare, run

log = logging.getLogger("corrsched")


def _fmt(value):
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value).lower()
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_results(metrics, out_dir, started=None, finished=None):
    """Write the CDFs, the percentile table, the groupings and a manifest.

    Returns a mapping from output name to path.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {out}: {exc.strerror}") from None
    paths = {name: out / name for name in
             ("distortion_cdf.csv", "rate_cdf.csv", "summary.csv", "groupings.csv")}
    x, cdf = metrics.distortion_cdf()
    _write_csv(paths["distortion_cdf.csv"], ["distortion_db", "cdf"],
               zip(map(float, x), map(float, cdf)))
    x, cdf = metrics.rate_cdf()
    _write_csv(paths["rate_cdf.csv"], ["rate_bits_per_sample", "cdf"],
               zip(map(float, x), map(float, cdf)))
    _write_csv(paths["summary.csv"], ["metric", "value"], metrics.percentiles().items())
    _write_csv(paths["groupings.csv"], ["cell_id", "group_index", "members"],
               grouping_rows(metrics.groupings))
    manifest = {
        "config_digest": metrics.config.digest(),
        "seed": metrics.config.run.seed,
        "version": __version__,
        "started": started,
        "finished": finished,
        # names relative to out_dir, so identical runs give identical manifests anywhere
        "outputs": sorted(paths),
        "config": to_dict(metrics.config),
    }
    paths["manifest.json"] = out / "manifest.json"
    paths["manifest.json"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return paths


def _timestamp():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _load(path, args):
    config = parse_config(path) if path else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.frames is not None:
        overrides["run.frames"] = args.frames
    return config.with_values(overrides) if overrides else config


def _run_one(config, out_dir):
    started = _timestamp()
    metrics = run(config)
    paths = emit_results(metrics, out_dir, started, _timestamp())
    return metrics, paths


def _parse_value(token):
    try:
        return tomli.loads(f"v = {token}")["v"]
    except tomli.TOMLDecodeError:
        return token


def cmd_run(args):
    config = _load(args.config, args)
    metrics, paths = _run_one(config, args.out)
    table = metrics.percentiles()
    for key, value in table.items():
        print(f"{key:28s} {_fmt(value)}")
    print(f"results written to {Path(args.out)}")
    return 0


def cmd_compare(args):
    configs = [_load(p, args) for p in args.configs]
    results = []
    for k, cfg in enumerate(configs):
        metrics, _ = _run_one(cfg, Path(args.out) / f"run{k}")
        results.append(metrics)
    rows, notes = compare(results)
    header = ["index", "config", "digest", "distortion_p95_db", "delta_distortion_p95_db",
              "rate_p5", "delta_rate_p5_db", "rate_mean", "delta_rate_mean_db"]
    table = [[r["index"], args.configs[r["index"]], r["digest"], r["distortion_p95_db"],
              r["delta_distortion_p95_db"], r["rate_p5"], r["delta_rate_p5_db"], r["rate_mean"],
              r["delta_rate_mean_db"]] for r in rows]
    _write_csv(Path(args.out) / "compare.csv", header, table)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    print(f"{'config':32s} {'p95 D [dB]':>11s} {'dD [dB]':>9s} {'p5 R':>9s} {'dR5 [dB]':>9s}")
    for r, row in zip(rows, table):
        print(f"{str(row[1])[-32:]:32s} {r['distortion_p95_db']:11.3f} "
              f"{r['delta_distortion_p95_db']:9.3f} {r['rate_p5']:9.4f} {r['delta_rate_p5_db']:9.3f}")
    return 0


def cmd_sweep(args):
    base = _load(args.config, args)
    values = [_parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigurationError("no sweep values given", key=args.param)
    rows = []
    for v in values:
        cfg = base.with_values({args.param: v})
        metrics, _ = _run_one(cfg, Path(args.out) / f"{args.param}={v}")
        t = metrics.percentiles()
        rows.append([v, t.get("distortion_p95_db", math.nan), t.get("rate_p5", math.nan),
                     t.get("rate_mean", math.nan), t.get("iot_db", math.nan)])
        print(f"{args.param}={v}: p95 distortion {_fmt(rows[-1][1])} dB")
    _write_csv(Path(args.out) / "sweep.csv",
               [args.param, "distortion_p95_db", "rate_p5", "rate_mean", "iot_db"], rows)
    return 0


def cmd_dump_defaults(args):
    sys.stdout.write(dumps(ExperimentConfig()))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="corrsched",
                                     description="Uplink scheduling simulator for correlated sources.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def overrides(p):
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--frames", type=int, help="override run.frames")
        p.add_argument("--out", default="results", help="output directory")

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config", nargs="?", help="TOML config (defaults if omitted)")
    overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired comparison of several configs")
    p.add_argument("configs", nargs="+")
    overrides(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="one-factor sweep")
    p.add_argument("config", nargs="?")
    p.add_argument("--param", required=True, help="dotted key, e.g. icon.p_l")
    p.add_argument("--values", required=True, help="comma-separated values")
    overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-defaults", help="print the default config as TOML")
    p.set_defaults(func=cmd_dump_defaults)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, SimulationError, SolverError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
