"""Experiment configuration: sectioned dataclasses and their TOML form.

Every key has a default, so an empty file is a valid configuration.  Keys
not listed here are rejected, and every error names the offending key as
``section.key``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .errors import ConfigurationError

DEFAULT_P_MAX = 0.25 / 63 * 1e-6  # W per subband


@dataclass(frozen=True)
class TopologyConfig:
    num_cells: int = 19
    site_distance: float = 130.0
    users_per_cell: int = 18


@dataclass(frozen=True)
class SourceModelConfig:
    variance: float = 10.0
    theta: float = 100.0
    mean: float = 0.0


@dataclass(frozen=True)
class RadioConfig:
    bandwidth_hz: float = 10e6
    num_subbands: int = 63
    noise_psd_dbm_hz: float = -174.0
    p_max_w: float = DEFAULT_P_MAX
    p_min_w: float = DEFAULT_P_MAX * 1e-6
    samples_per_frame: float = 1e6  # source samples coded per frame

    @property
    def subband_hz(self):
        return self.bandwidth_hz / self.num_subbands

    @property
    def noise_psd_w_hz(self):
        return 10.0 ** (self.noise_psd_dbm_hz / 10.0) * 1e-3


@dataclass(frozen=True)
class IconConfig:
    mode: str = "reuse1"  # reuse1 | static | adaptive
    p_h: float = 1.5e-14  # W received at the owner base station
    p_l: float = 1.5e-15
    c_hir: int = 21
    alpha: float = 0.2
    beta: float = 0.2
    adaptation_period: int = 50


@dataclass(frozen=True)
class GroupingConfig:
    method: str = "none"  # none | distance | distortion
    group_size: int = 1
    trials: int = 20
    n_outer: int = 0  # 0 = ceil(population / 3)
    warmup_frames: int = 200


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str = "pf"  # pf | dpf | opt
    alpha: float = 3.5
    window: float = 100.0
    opt_period: int = 10


@dataclass(frozen=True)
class RunConfig:
    frames: int = 2000
    seed: int = 0
    block_frames: int = 10  # frames per coding block in the reported distortion


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    source_model: SourceModelConfig = field(default_factory=SourceModelConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    icon: IconConfig = field(default_factory=IconConfig)
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def replace(self, **dotted):
        """Copy with ``section__key=value`` or ``{"section.key": value}`` overrides."""
        return from_dict(_merge(to_dict(self), {k.replace("__", "."): v for k, v in dotted.items()}))

    def with_values(self, overrides):
        return from_dict(_merge(to_dict(self), overrides))

    def digest(self):
        text = json.dumps(to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


_SECTION_TYPES = {
    "topology": TopologyConfig, "source_model": SourceModelConfig, "radio": RadioConfig,
    "icon": IconConfig, "grouping": GroupingConfig, "scheduler": SchedulerConfig,
    "run": RunConfig,
}


def _merge(base, overrides):
    out = {k: dict(v) for k, v in base.items()}
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in out or not key:
            raise ConfigurationError("unknown configuration key", key=dotted)
        out[section][key] = value
    return out


def to_dict(config):
    return {name: dataclasses.asdict(getattr(config, name)) for name in _SECTION_TYPES}


def _coerce(value, typ, key):
    if typ == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigurationError(f"expected an integer, got {value!r}", key=key)
        return value
    if typ == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", key=key)
        return float(value)
    if typ == "str":
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", key=key)
        return value
    raise AssertionError(typ)


def from_dict(data):
    """Resolve a (possibly partial) nested mapping into a validated config."""
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a table of sections")
    sections = {}
    for name, cls in _SECTION_TYPES.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigurationError("expected a table", key=name)
        known = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigurationError("unknown configuration key", key=f"{name}.{key}")
            kwargs[key] = _coerce(value, known[key].type, f"{name}.{key}")
        sections[name] = cls(**kwargs)
    for name in data:
        if name not in _SECTION_TYPES:
            raise ConfigurationError("unknown configuration section", key=name)
    config = ExperimentConfig(**sections)
    validate(config)
    return config


def _check(cond, key, message):
    if not cond:
        raise ConfigurationError(message, key=key)


def validate(config):
    t, s, r = config.topology, config.source_model, config.radio
    i, g, sc, run = config.icon, config.grouping, config.scheduler, config.run
    _check(t.num_cells in (7, 19), "topology.num_cells", "must be 7 or 19")
    _check(t.site_distance > 0, "topology.site_distance", "must be positive")
    _check(t.users_per_cell >= 1, "topology.users_per_cell", "must be >= 1")
    _check(s.variance > 0, "source_model.variance", "must be positive")
    _check(s.theta > 0, "source_model.theta", "must be positive")
    _check(r.bandwidth_hz > 0, "radio.bandwidth_hz", "must be positive")
    _check(r.num_subbands >= 1, "radio.num_subbands", "must be >= 1")
    _check(r.p_max_w > 0, "radio.p_max_w", "must be positive")
    _check(0 <= r.p_min_w <= r.p_max_w, "radio.p_min_w", "must lie in [0, p_max_w]")
    _check(r.samples_per_frame > 0, "radio.samples_per_frame", "must be positive")
    _check(i.mode in ("reuse1", "static", "adaptive"), "icon.mode",
           "must be one of reuse1, static, adaptive")
    _check(i.p_h > 0, "icon.p_h", "must be positive")
    _check(0 <= i.p_l <= i.p_h, "icon.p_l", "must lie in [0, p_h]")
    _check(0 <= i.c_hir <= r.num_subbands, "icon.c_hir", "must lie in [0, radio.num_subbands]")
    _check(0 <= i.alpha <= 1, "icon.alpha", "must lie in [0, 1]")
    _check(0 <= i.beta <= 1, "icon.beta", "must lie in [0, 1]")
    _check(i.adaptation_period >= 1, "icon.adaptation_period", "must be >= 1")
    _check(g.method in ("none", "distance", "distortion"), "grouping.method",
           "must be one of none, distance, distortion")
    _check(g.group_size in (1, 2, 3), "grouping.group_size", "must be 1, 2 or 3")
    _check(g.method != "none" or g.group_size == 1, "grouping.group_size",
           "group_size > 1 needs a grouping method")
    _check(g.trials >= 1, "grouping.trials", "must be >= 1")
    _check(0 <= g.n_outer <= t.users_per_cell, "grouping.n_outer",
           "must lie in [0, topology.users_per_cell]")
    _check(g.warmup_frames >= 0, "grouping.warmup_frames", "must be >= 0")
    _check(sc.kind in ("pf", "dpf", "opt"), "scheduler.kind", "must be one of pf, dpf, opt")
    _check(sc.alpha >= 0, "scheduler.alpha", "must be >= 0")
    _check(sc.window >= 1, "scheduler.window", "must be >= 1")
    _check(sc.opt_period >= 1, "scheduler.opt_period", "must be >= 1")
    _check(run.frames >= 0, "run.frames", "must be >= 0")
    _check(run.seed >= 0, "run.seed", "must be >= 0")
    _check(run.block_frames >= 1, "run.block_frames", "must be >= 1")


def parse_config(path):
    """Read a TOML config file; missing keys take their defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc.strerror}") from None
    return loads(text)


def loads(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    return from_dict(data)


def dumps(config):
    return tomli_w.dumps(to_dict(config))
