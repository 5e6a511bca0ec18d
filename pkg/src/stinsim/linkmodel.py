"""Per-path link truth: delay profile, serialization, loss and handovers.

A :class:`PathProfile` is immutable and describes what the path does over
time.  A :class:`Link` wraps a profile with the mutable per-run state (the
sender-side serialization queue, the last arrival for FIFO clamping and the
random streams) and performs transmissions.
"""

from __future__ import annotations

import bisect
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .engine import US_PER_MS, US_PER_S, RngStream, SimTime


class PathKind(str, enum.Enum):
    SATELLITE = "satellite"
    TERRESTRIAL = "terrestrial"


class HandoverKind(str, enum.Enum):
    DISCONNECT = "disconnect"
    RTT_SHIFT = "rtt_shift"


class LossCause(str, enum.Enum):
    RANDOM = "random"
    HANDOVER = "handover"
    CONGESTION = "congestion"  # sender-side queue overflow


class ProfileError(ValueError):
    """Malformed profile, trace or handover schedule."""


@dataclass(frozen=True)
class HandoverEvent:
    start: SimTime
    duration: SimTime
    kind: HandoverKind = HandoverKind.DISCONNECT
    post_shift_owd: SimTime | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ProfileError(f"handover at {self.start}us has non-positive duration")
        if self.kind is HandoverKind.RTT_SHIFT and (self.post_shift_owd is None or self.post_shift_owd <= 0):
            raise ProfileError(f"rtt_shift handover at {self.start}us needs a positive post_shift_owd")

    @property
    def end(self) -> SimTime:
        return self.start + self.duration


# One-way delay functions.  All return integer microseconds.

@dataclass(frozen=True)
class ConstantOwd:
    owd: SimTime

    def __call__(self, t: SimTime) -> SimTime:
        return self.owd


@dataclass(frozen=True)
class SawtoothOwd:
    """Linear ramp from ``low`` at the start of each period up to ``high``."""

    low: SimTime
    high: SimTime
    period: SimTime
    phase: SimTime = 0

    def __call__(self, t: SimTime) -> SimTime:
        frac = ((t + self.phase) % self.period) / self.period
        return int(round(self.low + (self.high - self.low) * frac))


@dataclass(frozen=True)
class SinusoidOwd:
    low: SimTime
    high: SimTime
    period: SimTime
    phase: SimTime = 0

    def __call__(self, t: SimTime) -> SimTime:
        mid = (self.low + self.high) / 2
        amp = (self.high - self.low) / 2
        return int(round(mid - amp * math.cos(2 * math.pi * (t + self.phase) / self.period)))


@dataclass(frozen=True)
class TraceOwd:
    """Piecewise-linear interpolation through ``(time, owd)`` samples."""

    times: tuple[SimTime, ...]
    owds: tuple[SimTime, ...]

    def __call__(self, t: SimTime) -> SimTime:
        times = self.times
        if t <= times[0]:
            return self.owds[0]
        if t >= times[-1]:
            return self.owds[-1]
        i = bisect.bisect_right(times, t) - 1
        t0, t1 = times[i], times[i + 1]
        v0, v1 = self.owds[i], self.owds[i + 1]
        if t == t0:
            return v0
        return int(round(v0 + (v1 - v0) * (t - t0) / (t1 - t0)))


@dataclass(frozen=True)
class PathProfile:
    path_id: str
    kind: PathKind
    base_owd: Callable[[SimTime], SimTime]
    bandwidth_bps: float
    loss_rate: float = 0.0
    handovers: tuple[HandoverEvent, ...] = ()
    jitter_stddev: SimTime = 500
    queue_limit: int | None = None  # packets, including the one in service
    _starts: tuple[SimTime, ...] = field(init=False, repr=False, compare=False)
    _outages: tuple[tuple[SimTime, SimTime], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_rate < 1.0:
            raise ProfileError(f"path {self.path_id}: loss_rate {self.loss_rate} outside [0, 1)")
        if self.bandwidth_bps <= 0:
            raise ProfileError(f"path {self.path_id}: bandwidth must be positive")
        ordered = tuple(sorted(self.handovers, key=lambda h: h.start))
        for a, b in zip(ordered, ordered[1:]):
            if b.start < a.end:
                raise ProfileError(
                    f"path {self.path_id}: handovers at {a.start}us and {b.start}us overlap"
                )
        object.__setattr__(self, "handovers", ordered)
        object.__setattr__(self, "_starts", tuple(h.start for h in ordered))
        object.__setattr__(
            self,
            "_outages",
            tuple((h.start, h.end) for h in ordered if h.kind is HandoverKind.DISCONNECT),
        )

    @property
    def outages(self) -> tuple[tuple[SimTime, SimTime], ...]:
        return self._outages

    def in_outage(self, t: SimTime) -> bool:
        return _window_containing(self._outages, t) is not None

    def outage_overlapping(self, t0: SimTime, t1: SimTime) -> tuple[SimTime, SimTime] | None:
        """First disconnect window intersecting the closed interval [t0, t1]."""
        outages = self._outages
        i = bisect.bisect_right(outages, (t0, math.inf)) - 1
        if i < 0:
            i = 0
        for start, end in outages[i:]:
            if start > t1:
                return None
            if end > t0:
                return (start, end)
        return None


def _window_containing(windows: Sequence[tuple[SimTime, SimTime]], t: SimTime):
    i = bisect.bisect_right(windows, (t, math.inf)) - 1
    if i >= 0 and windows[i][0] <= t < windows[i][1]:
        return windows[i]
    return None


def owd_at(path: PathProfile, t: SimTime) -> SimTime | None:
    """One-way delay at ``t`` including active rtt shifts, or None while disconnected."""
    if path.in_outage(t):
        return None
    return _owd_ignoring_outage(path, t)


def _owd_ignoring_outage(path: PathProfile, t: SimTime) -> SimTime:
    i = bisect.bisect_right(path._starts, t) - 1
    if i >= 0:
        h = path.handovers[i]
        if h.kind is HandoverKind.RTT_SHIFT and t < h.end:
            return h.post_shift_owd
    return path.base_owd(t)


def handover_oracle(path: PathProfile, t: SimTime) -> HandoverEvent | None:
    """Earliest handover whose start is at or after ``t``."""
    i = bisect.bisect_left(path._starts, t)
    if i < len(path.handovers):
        return path.handovers[i]
    return None


def serialization_us(size_bytes: int, bandwidth_bps: float) -> SimTime:
    return int(math.ceil(size_bytes * 8 * US_PER_S / bandwidth_bps))


@dataclass(frozen=True)
class Delivered:
    delivered_at: SimTime
    departed_at: SimTime


@dataclass(frozen=True)
class Lost:
    cause: LossCause
    departed_at: SimTime
    # when the segment would have arrived, used for the FIFO bookkeeping
    would_arrive_at: SimTime


DeliveryOutcome = Delivered | Lost


class Link:
    """Mutable per-run state for one path: a single-server FIFO at the sender."""

    def __init__(self, profile: PathProfile, loss_rng: RngStream, jitter_rng: RngStream) -> None:
        self.profile = profile
        self.loss_rng = loss_rng
        self.jitter_rng = jitter_rng
        self.busy_until: SimTime = 0
        self.last_arrival: SimTime = -1
        self.last_ack_arrival: SimTime = -1
        self._jitter_cap = 3 * profile.jitter_stddev
        self._departures: deque[SimTime] = deque()

    def transmit(self, size_bytes: int, t_send: SimTime) -> DeliveryOutcome:
        if size_bytes <= 0:
            raise ValueError("segment size must be positive")
        profile = self.profile
        if profile.queue_limit is not None:
            departures = self._departures
            while departures and departures[0] <= t_send:
                departures.popleft()
            if len(departures) >= profile.queue_limit:
                return Lost(LossCause.CONGESTION, t_send, t_send)
        start = max(t_send, self.busy_until)
        departed = start + serialization_us(size_bytes, profile.bandwidth_bps)
        self.busy_until = departed
        if profile.queue_limit is not None:
            self._departures.append(departed)
        # both draws are taken unconditionally so the streams advance identically
        lost_randomly = self.loss_rng.uniform() < profile.loss_rate
        jitter = 0
        if profile.jitter_stddev > 0:
            jitter = int(round(self.jitter_rng.gauss() * profile.jitter_stddev))
            jitter = max(-self._jitter_cap, min(self._jitter_cap, jitter))
        arrival = departed + _owd_ignoring_outage(profile, departed) + jitter
        if arrival <= self.last_arrival:
            arrival = self.last_arrival + 1
        if arrival <= departed:
            arrival = departed + 1
        self.last_arrival = arrival
        if profile.outage_overlapping(t_send, arrival) is not None:
            return Lost(LossCause.HANDOVER, departed, arrival)
        if lost_randomly:
            return Lost(LossCause.RANDOM, departed, arrival)
        return Delivered(arrival, departed)

    def ack_arrival(self, t_rx: SimTime) -> SimTime:
        """Arrival time at the sender of an ACK emitted at ``t_rx``.

        ACKs are never lost; one whose trip crosses a disconnect is held until
        the path returns.
        """
        profile = self.profile
        t = t_rx
        while True:
            arrival = t + _owd_ignoring_outage(profile, t)
            window = profile.outage_overlapping(t, arrival)
            if window is None:
                break
            t = window[1]
        if arrival <= self.last_ack_arrival:
            arrival = self.last_ack_arrival + 1
        self.last_ack_arrival = arrival
        return arrival


def transmit(link: Link, seg_size_bytes: int, t_send: SimTime) -> DeliveryOutcome:
    return link.transmit(seg_size_bytes, t_send)


# Profile generation

class RttShape(str, enum.Enum):
    CONSTANT = "constant"
    SAWTOOTH = "sawtooth"
    SINUSOID = "sinusoid"
    TRACE = "trace"


@dataclass(frozen=True)
class RttProfileSpec:
    shape: RttShape
    min_rtt: SimTime
    max_rtt: SimTime
    period_s: float = 0.0
    trace_path: str | None = None
    phase_s: float = 0.0

    def __post_init__(self) -> None:
        if self.shape is not RttShape.TRACE:
            if self.min_rtt <= 0 or self.min_rtt > self.max_rtt:
                raise ProfileError("need 0 < min_rtt <= max_rtt")
            if self.shape in (RttShape.SAWTOOTH, RttShape.SINUSOID) and self.period_s <= 0:
                raise ProfileError(f"{self.shape.value} profile needs period > 0")
        elif not self.trace_path:
            raise ProfileError("trace profile needs trace_path")


@dataclass(frozen=True)
class HandoverPlan:
    """Periodic handovers: ``count`` events every ``every_s`` starting at ``first_s``."""

    first_s: float
    every_s: float
    count: int
    duration_s: float = 0.8
    kind: HandoverKind = HandoverKind.DISCONNECT
    post_rtt_ms: float | None = None

    def events(self) -> list[HandoverEvent]:
        post = None if self.post_rtt_ms is None else int(round(self.post_rtt_ms * US_PER_MS / 2))
        return [
            HandoverEvent(
                start=int(round((self.first_s + n * self.every_s) * US_PER_S)),
                duration=int(round(self.duration_s * US_PER_S)),
                kind=self.kind,
                post_shift_owd=post,
            )
            for n in range(self.count)
        ]


def load_rtt_trace(source: str | Path, horizon: SimTime | None = None) -> list[tuple[SimTime, SimTime]]:
    """Parse ``time_seconds,rtt_milliseconds`` lines; ``#`` starts a comment line."""
    path = Path(source)
    samples: list[tuple[SimTime, SimTime]] = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated fields")
                t = float(parts[0])
                rtt = float(parts[1])
            except ValueError as exc:
                raise ProfileError(f"{path}:{lineno}: malformed trace line {line!r} ({exc})") from None
            if rtt <= 0 or t < 0:
                raise ProfileError(f"{path}:{lineno}: time must be >= 0 and rtt > 0")
            t_us = int(round(t * US_PER_S))
            if samples and t_us <= samples[-1][0]:
                raise ProfileError(f"{path}:{lineno}: sample times must increase")
            samples.append((t_us, int(round(rtt * US_PER_MS))))
    if not samples:
        raise ProfileError(f"{path}: trace contains no samples")
    if horizon is not None and samples[-1][0] < horizon:
        raise ProfileError(
            f"{path}:{lineno}: trace ends at {samples[-1][0] / US_PER_S}s, "
            f"short of the {horizon / US_PER_S}s horizon"
        )
    return samples


_SCHEDULE_KINDS = {"disconnect": HandoverKind.DISCONNECT, "shift": HandoverKind.RTT_SHIFT}


def load_handover_schedule(source: str | Path) -> list[HandoverEvent]:
    """Parse ``start_seconds,duration_seconds,kind[,post_rtt_ms]`` lines."""
    path = Path(source)
    events: list[HandoverEvent] = []
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) not in (3, 4):
                    raise ValueError("expected 3 or 4 fields")
                start, duration = float(parts[0]), float(parts[1])
                kind = _SCHEDULE_KINDS.get(parts[2])
                if kind is None:
                    raise ValueError(f"unknown kind {parts[2]!r}")
                post = None
                if kind is HandoverKind.RTT_SHIFT:
                    if len(parts) != 4:
                        raise ValueError("shift needs post_rtt_ms")
                    post = int(round(float(parts[3]) * US_PER_MS / 2))
                events.append(HandoverEvent(
                    start=int(round(start * US_PER_S)),
                    duration=int(round(duration * US_PER_S)),
                    kind=kind,
                    post_shift_owd=post,
                ))
            except (ValueError, ProfileError) as exc:
                raise ProfileError(f"{path}:{lineno}: {exc}") from None
    return events


def make_owd(spec: RttProfileSpec, horizon: SimTime | None = None) -> Callable[[SimTime], SimTime]:
    # RTT is split symmetrically into two one-way delays
    low, high = spec.min_rtt // 2, spec.max_rtt // 2
    phase = int(round(spec.phase_s * US_PER_S))
    if spec.shape is RttShape.CONSTANT:
        return ConstantOwd(low)
    if spec.shape is RttShape.SAWTOOTH:
        return SawtoothOwd(low, high, int(round(spec.period_s * US_PER_S)), phase)
    if spec.shape is RttShape.SINUSOID:
        return SinusoidOwd(low, high, int(round(spec.period_s * US_PER_S)), phase)
    samples = load_rtt_trace(spec.trace_path, horizon)
    return TraceOwd(tuple(t for t, _ in samples), tuple(int(round(r / 2)) for _, r in samples))


def generate_profile(
    path_id: str,
    kind: PathKind,
    spec: RttProfileSpec,
    handover_plan: HandoverPlan | Iterable[HandoverEvent] | None,
    bandwidth_bps: float,
    loss_rate: float = 0.0,
    jitter_stddev: SimTime = 500,
    horizon: SimTime | None = None,
    queue_limit: int | None = None,
) -> PathProfile:
    if handover_plan is None:
        handovers: list[HandoverEvent] = []
    elif isinstance(handover_plan, HandoverPlan):
        handovers = handover_plan.events()
    else:
        handovers = list(handover_plan)
    return PathProfile(
        path_id=path_id,
        kind=kind,
        base_owd=make_owd(spec, horizon),
        bandwidth_bps=bandwidth_bps,
        loss_rate=loss_rate,
        handovers=tuple(handovers),
        jitter_stddev=jitter_stddev,
        queue_limit=queue_limit,
    )


def ping_series(path: PathProfile, duration: SimTime, interval: SimTime) -> list[tuple[SimTime, SimTime | None]]:
    """RTT a ping would see every ``interval``; None while the path is down."""
    out = []
    t = 0
    while t <= duration:
        fwd = owd_at(path, t)
        if fwd is None:
            out.append((t, None))
        else:
            back = owd_at(path, t + fwd)
            out.append((t, None if back is None else fwd + back))
        t += interval
    return out
