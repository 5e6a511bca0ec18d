"""Scenario configuration: YAML grammar, validation and round-tripping.

Grammar (all keys optional unless marked)::

    name: str
    seed: int
    file_size_mb: float        # required; full-scale size, MB = 2**20 bytes
    scale_factor: float        # divides bandwidths, file size and buffers
    horizon_s: float
    scheduler:
      name: alcs | minrtt | rr | ecf | blest
      alpha, update_interval_ms, sigma_min, sigma_max, ecf_beta, blest_lambda_step, blest_lambda_max
    transport:
      mss, recv_window, sndbuf, sndbuf_auto, initial_cwnd, initial_ssthresh, rto_min_ms, dup_threshold, idle_restart
    paths:                     # required, at least one
      - id: str                # required
        kind: satellite | terrestrial
        bandwidth_mbps, loss_rate, jitter_ms, queue_bdp
        rtt: {shape: constant|sawtooth|sinusoid|trace, min_ms, max_ms, period_s, phase_s, trace}
        handovers: {first_s, every_s, count, duration_s, kind: disconnect|rtt_shift, post_rtt_ms}
                   or {schedule: <file>}
    subflows: [path ids]       # default: one subflow per path

``recv_window`` and ``sndbuf`` are given in segments at full scale and are
divided by ``scale_factor`` like the bandwidths.  ``queue_bdp`` sizes the
drop-tail buffer in front of each path as a multiple of its bandwidth-delay
product at ``min_ms``, so it holds the same queueing delay at any scale.
``sndbuf_auto`` > 0 sizes the send buffer as that multiple of the summed
congestion windows, with ``sndbuf`` as the floor.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..schedulers import SCHEDULER_NAMES


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None) -> None:
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where += f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


@dataclass
class RttConfig:
    shape: str = "constant"
    min_ms: float = 60.0
    max_ms: float = 60.0
    period_s: float = 0.0
    phase_s: float = 0.0
    trace: str | None = None


@dataclass
class HandoverConfig:
    first_s: float = 15.0
    every_s: float = 15.0
    count: int = 0
    duration_s: float = 0.8
    kind: str = "disconnect"
    post_rtt_ms: float | None = None
    schedule: str | None = None


@dataclass
class PathConfig:
    id: str
    kind: str = "terrestrial"
    bandwidth_mbps: float = 100.0
    loss_rate: float = 0.0001
    jitter_ms: float = 0.5
    queue_bdp: float = 0.0  # 0 = unbounded
    rtt: RttConfig = field(default_factory=RttConfig)
    handovers: HandoverConfig | None = None


@dataclass
class SchedulerConfig:
    name: str = "alcs"
    alpha: float = 0.9
    update_interval_ms: float = 500.0
    sigma_min: float = 0.25
    sigma_max: float = 4.0
    ecf_beta: float = 0.25
    blest_lambda_step: float = 0.05
    blest_lambda_max: float = 1.3


@dataclass
class TransportSection:
    mss: int = 1448
    recv_window: int = 4096
    sndbuf: int = 0
    sndbuf_auto: float = 0.0
    initial_cwnd: int = 10
    initial_ssthresh: int = 64
    rto_min_ms: float = 200.0
    dup_threshold: int = 3
    idle_restart: bool = True


@dataclass
class ScenarioConfig:
    file_size_mb: float
    paths: list[PathConfig]
    name: str = "scenario"
    seed: int = 1
    scale_factor: float = 10.0
    horizon_s: float = 300.0
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    transport: TransportSection = field(default_factory=TransportSection)
    subflows: list[str] | None = None

    @property
    def file_size_bytes(self) -> int:
        return int(round(self.file_size_mb * (1 << 20) / self.scale_factor))

    def scaled_segments(self, value: int) -> int:
        return max(1, int(round(value / self.scale_factor))) if value else 0

    def with_changes(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _prune(dataclasses.asdict(self))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _prune(value):
    if isinstance(value, dict):
        return {k: _prune(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_prune(v) for v in value]
    return value


_SECTIONS = {
    "scheduler": SchedulerConfig,
    "transport": TransportSection,
}


class _Located:
    """Plain data plus the source line of every mapping key."""

    def __init__(self, node: yaml.Node, lines: dict[str, int], prefix: str = "") -> None:
        self.lines = lines
        self.data = self._convert(node, prefix)

    def _convert(self, node, prefix):
        if isinstance(node, yaml.MappingNode):
            out = {}
            for key_node, value_node in node.value:
                key = key_node.value
                path = f"{prefix}.{key}" if prefix else key
                if key in out:
                    raise ConfigError("duplicate key", path, key_node.start_mark.line + 1)
                self.lines[path] = key_node.start_mark.line + 1
                out[key] = self._convert(value_node, path)
            return out
        if isinstance(node, yaml.SequenceNode):
            items = []
            for idx, item in enumerate(node.value):
                path = f"{prefix}[{idx}]"
                self.lines[path] = item.start_mark.line + 1
                items.append(self._convert(item, path))
            return items
        return yaml.safe_load(yaml.serialize(node))


def _build(cls, data: Any, path: str, lines: dict[str, int]):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path or None, lines.get(path))
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        key_path = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError("unknown key", key_path, lines.get(key_path))
        kwargs[key] = _coerce(cls, known[key], value, key_path, lines)
    missing = [
        name for name, f in known.items()
        if name not in kwargs and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        name = f"{path}.{missing[0]}" if path else missing[0]
        raise ConfigError("missing required field", name, lines.get(path))
    return cls(**kwargs)


def _coerce(cls, f: dataclasses.Field, value, path, lines):
    line = lines.get(path)
    if cls is ScenarioConfig and f.name in _SECTIONS:
        return _build(_SECTIONS[f.name], value, path, lines)
    if cls is ScenarioConfig and f.name == "paths":
        if not isinstance(value, list) or not value:
            raise ConfigError("need a non-empty list of paths", path, line)
        return [_build(PathConfig, item, f"{path}[{i}]", lines) for i, item in enumerate(value)]
    if cls is ScenarioConfig and f.name == "subflows":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError("expected a list of path ids", path, line)
        return value
    if cls is PathConfig and f.name == "rtt":
        return _build(RttConfig, value, path, lines)
    if cls is PathConfig and f.name == "handovers":
        return None if value is None else _build(HandoverConfig, value, path, lines)
    expected = {int: (int,), float: (int, float), str: (str,), bool: (bool,)}
    ftype = f.type if isinstance(f.type, type) else _resolve(f.type)
    if value is None and "None" in str(f.type):
        return None
    if ftype in expected and ((isinstance(value, bool) and ftype is not bool)
                              or not isinstance(value, expected[ftype])):
        raise ConfigError(f"expected {ftype.__name__}, got {value!r}", path, line)
    return float(value) if ftype is float else value


def _resolve(annotation: str):
    base = annotation.split("|")[0].strip()
    return {"int": int, "float": float, "str": str, "bool": bool}.get(base)


def validate(cfg: ScenarioConfig, lines: dict[str, int] | None = None) -> ScenarioConfig:
    lines = lines or {}

    def fail(msg, key):
        raise ConfigError(msg, key, lines.get(key))

    if cfg.file_size_mb <= 0:
        fail("file size must be positive", "file_size_mb")
    if cfg.scale_factor <= 0:
        fail("scale_factor must be positive", "scale_factor")
    if cfg.horizon_s <= 0:
        fail("horizon must be positive", "horizon_s")
    if cfg.scheduler.name not in SCHEDULER_NAMES:
        fail(f"unknown scheduler {cfg.scheduler.name!r}", "scheduler.name")
    if not 0 < cfg.scheduler.alpha < 1:
        fail("alpha must lie in (0, 1)", "scheduler.alpha")
    if cfg.scheduler.update_interval_ms <= 0:
        fail("update interval must be positive", "scheduler.update_interval_ms")
    if not 0 < cfg.scheduler.sigma_min <= 1 <= cfg.scheduler.sigma_max:
        fail("sigma clamp must bracket 1.0", "scheduler.sigma_min")
    if cfg.scheduler.blest_lambda_max < 1:
        fail("must be >= 1", "scheduler.blest_lambda_max")
    t = cfg.transport
    for key in ("mss", "recv_window", "initial_cwnd", "initial_ssthresh", "dup_threshold"):
        if getattr(t, key) < 1:
            fail("must be >= 1", f"transport.{key}")
    if t.sndbuf < 0:
        fail("must be >= 0", "transport.sndbuf")
    if t.sndbuf_auto < 0:
        fail("must be >= 0", "transport.sndbuf_auto")
    seen = set()
    for i, p in enumerate(cfg.paths):
        base = f"paths[{i}]"
        if p.id in seen:
            fail(f"duplicate path id {p.id!r}", f"{base}.id")
        seen.add(p.id)
        if p.kind not in ("satellite", "terrestrial"):
            fail(f"unknown path kind {p.kind!r}", f"{base}.kind")
        if p.bandwidth_mbps <= 0:
            fail("bandwidth must be positive", f"{base}.bandwidth_mbps")
        if not 0 <= p.loss_rate < 1:
            fail("loss rate must lie in [0, 1)", f"{base}.loss_rate")
        if p.jitter_ms < 0:
            fail("jitter must be >= 0", f"{base}.jitter_ms")
        if p.queue_bdp < 0:
            fail("must be >= 0", f"{base}.queue_bdp")
        r = p.rtt
        if r.shape not in ("constant", "sawtooth", "sinusoid", "trace"):
            fail(f"unknown rtt shape {r.shape!r}", f"{base}.rtt.shape")
        if r.shape == "trace":
            if not r.trace:
                fail("trace shape needs a trace file", f"{base}.rtt.trace")
        else:
            if r.min_ms <= 0 or r.min_ms > r.max_ms:
                fail("need 0 < min_ms <= max_ms", f"{base}.rtt.min_ms")
            if r.shape != "constant" and r.period_s <= 0:
                fail("periodic shapes need period_s > 0", f"{base}.rtt.period_s")
        h = p.handovers
        if h is not None and h.schedule is None:
            if h.count < 0:
                fail("count must be >= 0", f"{base}.handovers.count")
            if h.duration_s <= 0:
                fail("duration must be positive", f"{base}.handovers.duration_s")
            if h.count > 1 and h.every_s < h.duration_s:
                fail("handovers would overlap", f"{base}.handovers.every_s")
            if h.kind not in ("disconnect", "rtt_shift"):
                fail(f"unknown handover kind {h.kind!r}", f"{base}.handovers.kind")
            if h.kind == "rtt_shift" and not h.post_rtt_ms:
                fail("rtt_shift needs post_rtt_ms", f"{base}.handovers.post_rtt_ms")
    if cfg.subflows is not None:
        if not cfg.subflows:
            fail("need at least one subflow", "subflows")
        for i, pid in enumerate(cfg.subflows):
            if pid not in seen:
                fail(f"subflow refers to unknown path {pid!r}", f"subflows[{i}]")
    return cfg


def load_scenario(text: str, base_dir: str | Path | None = None) -> ScenarioConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty scenario")
    lines: dict[str, int] = {}
    data = _Located(node, lines).data
    cfg = _build(ScenarioConfig, data, "", lines)
    if base_dir is not None:
        _resolve_files(cfg, Path(base_dir))
    return validate(cfg, lines)


def _resolve_files(cfg: ScenarioConfig, base: Path) -> None:
    for p in cfg.paths:
        if p.rtt.trace and not Path(p.rtt.trace).is_absolute():
            p.rtt.trace = str(base / p.rtt.trace)
        if p.handovers and p.handovers.schedule and not Path(p.handovers.schedule).is_absolute():
            p.handovers.schedule = str(base / p.handovers.schedule)


def load_scenario_file(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return load_scenario(path.read_text(), base_dir=path.parent)
