"""Run statistics: completion, throughput, retransmission causes, path shares."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .engine import SimTime, US_PER_MS, US_PER_S
from .linkmodel import PathKind
from .transport import Connection, RetransCause, Segment, loss_cause_to_retrans

MB = 1 << 20


def classify_retransmission(seg: Segment, index: int = 1) -> RetransCause:
    """Cause behind transmission ``index`` (>= 1) of ``seg``.

    The previous transmission's link truth decides: a disconnect loss is a
    handover retransmission, a Bernoulli loss a random one, and a copy that
    actually got through (the sender gave up on it too early) a spurious one,
    unless its ACK was held back by a disconnect, which counts as handover.
    """
    if len(seg.transmissions) <= index or index < 1:
        raise ValueError(f"segment {seg.conn_seq} has no retransmission #{index}")
    prev = seg.transmissions[index - 1]
    if prev.retrans_cause is not None:
        return prev.retrans_cause
    return loss_cause_to_retrans(prev.cause)


@dataclass
class RunMetrics:
    scheduler: str
    seed: int
    file_size_bytes: int
    completed: bool
    completion_time: float  # seconds; horizon if incomplete
    avg_throughput: float  # MB/s, MB = 2**20 bytes
    retrans_total: int
    retrans_handover: int
    retrans_random: int
    retrans_congestion: int
    retrans_spurious: int
    retrans_rate: float
    original_segments: int
    path_bytes: dict[str, int]
    path_fraction: dict[str, float]
    path_kind: dict[str, str]
    subflow_sent: dict[str, int]
    deferred: int
    window_blocked: int
    reorder_max_occupancy: int
    duplicates_at_receiver: int
    timeouts: dict[str, int]
    event_log_digest: str
    events_dispatched: int
    scenario: str = ""
    extra: dict = field(default_factory=dict)

    def satellite_fraction(self, satellite_paths: Iterable[str] | None = None) -> float:
        """Byte share carried by satellite paths (by default every path of that kind)."""
        if satellite_paths is None:
            satellite_paths = [p for p, kind in self.path_kind.items() if kind == PathKind.SATELLITE.value]
        return sum(self.path_fraction.get(p, 0.0) for p in satellite_paths)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "RunMetrics":
        return cls(**data)


def finalize(conn: Connection, scheduler: str, seed: int, horizon: SimTime, digest: int,
             events: int, scenario: str = "") -> RunMetrics:
    completed = conn.completed_at is not None
    end = conn.completed_at if completed else horizon
    elapsed = (end - (conn.start_at or 0)) / US_PER_S
    path_bytes: dict[str, int] = {}
    for sf in conn.subflows:
        path_bytes[sf.path_id] = path_bytes.get(sf.path_id, 0) + sf.bytes_sent
    total = sum(path_bytes.values())
    fractions = {p: (b / total if total else 0.0) for p, b in path_bytes.items()}
    retrans = conn.retrans
    retrans_total = sum(retrans.values())
    throughput = conn.file_size / MB / elapsed if completed and elapsed > 0 else 0.0
    return RunMetrics(
        scheduler=scheduler,
        seed=seed,
        file_size_bytes=conn.file_size,
        completed=completed,
        completion_time=elapsed,
        avg_throughput=throughput,
        retrans_total=retrans_total,
        retrans_handover=retrans[RetransCause.HANDOVER],
        retrans_random=retrans[RetransCause.RANDOM],
        retrans_congestion=retrans[RetransCause.CONGESTION],
        retrans_spurious=retrans[RetransCause.SPURIOUS],
        retrans_rate=retrans_total / conn.original_sends if conn.original_sends else 0.0,
        original_segments=conn.original_sends,
        path_bytes=path_bytes,
        path_fraction=fractions,
        path_kind={sf.path_id: sf.link.profile.kind.value for sf in conn.subflows},
        subflow_sent={sf.path_id: sf.sent for sf in conn.subflows},
        deferred=conn.defers,
        window_blocked=conn.window_blocked,
        reorder_max_occupancy=conn.receiver.max_occupancy,
        duplicates_at_receiver=conn.receiver.duplicates,
        timeouts={sf.path_id: sf.timeouts for sf in conn.subflows},
        event_log_digest=f"{digest:016x}",
        events_dispatched=events,
        scenario=scenario,
    )


def write_series_csv(series: Sequence[tuple[SimTime, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, value in series:
            writer.writerow([f"{t / US_PER_S:.6f}", f"{value:.6g}"])


def rtt_spread_cdf(samples: Sequence[tuple[SimTime, float | None]], window: SimTime) -> list[tuple[float, float]]:
    """Empirical CDF of per-window (max - min) RTT, in milliseconds.

    ``samples`` are ``(time_us, rtt_us)``; samples with no RTT (path down)
    are skipped.  Windows are consecutive, aligned at the first sample.
    """
    if not samples:
        return []
    t0 = samples[0][0]
    buckets: dict[int, list[float]] = {}
    for t, rtt in samples:
        if rtt is None:
            continue
        buckets.setdefault((t - t0) // window, []).append(rtt)
    spreads = sorted((max(v) - min(v)) / US_PER_MS for v in buckets.values() if v)
    n = len(spreads)
    cdf: list[tuple[float, float]] = []
    for idx, spread in enumerate(spreads, start=1):
        if cdf and cdf[-1][0] == spread:
            cdf[-1] = (spread, idx / n)
        else:
            cdf.append((spread, idx / n))
    return cdf


def prob_spread_exceeds(cdf: Sequence[tuple[float, float]], threshold_ms: float) -> float:
    below = 0.0
    for spread, p in cdf:
        if spread <= threshold_ms:
            below = p
    return 1.0 - below
