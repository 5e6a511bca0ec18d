"""Deterministic discrete-event core.

Time is kept as integer microseconds.  Events with equal timestamps fire in
insertion order.  Randomness comes from :class:`RngStream`, a xoshiro256**
generator seeded through splitmix64, so a given ``(seed, stream_id)`` pair
produces the same draws on every platform.
"""

from __future__ import annotations

import enum
import hashlib
import heapq
import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Callable

SimTime = int  # microseconds since simulation start

US_PER_MS = 1_000
US_PER_S = 1_000_000

_MASK64 = (1 << 64) - 1


def ms(value: float) -> SimTime:
    return int(round(value * US_PER_MS))


def seconds(value: float) -> SimTime:
    return int(round(value * US_PER_S))


def to_seconds(t: SimTime) -> float:
    return t / US_PER_S


class EventKind(enum.IntEnum):
    SEGMENT_ARRIVAL = 1
    ACK_ARRIVAL = 2
    TIMEOUT = 3
    COMPENSATION_TICK = 4
    HANDOVER_BOUNDARY = 5
    APP_WRITE = 6


class SimulationError(RuntimeError):
    """Raised on simulator logic bugs such as scheduling into the past."""


@dataclass(order=True)
class Event:
    fire_at: SimTime
    seq_no: int
    kind: EventKind = field(compare=False)
    handler: Callable[..., Any] = field(compare=False, repr=False)
    args: tuple = field(compare=False, default=(), repr=False)
    tag: tuple[int, ...] = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)

    def cancel(self) -> None:
        self.cancelled = True


@dataclass(frozen=True)
class RunOutcome:
    time: SimTime
    exhausted: bool


class Simulator:
    """Event queue plus clock.

    ``schedule`` returns the :class:`Event` itself, which doubles as the
    cancellation handle.  Cancelled events stay in the heap and are skipped
    when popped.
    """

    def __init__(self) -> None:
        self.now: SimTime = 0
        self._queue: list[Event] = []
        self._counter = itertools.count()
        self._digest = hashlib.blake2b(digest_size=8)
        self.dispatched = 0
        self.log: list[tuple[int, SimTime, tuple[int, ...]]] | None = None

    def schedule(
        self,
        fire_at: SimTime,
        kind: EventKind,
        handler: Callable[..., Any],
        *args: Any,
        tag: tuple[int, ...] = (),
    ) -> Event:
        if fire_at < self.now:
            raise SimulationError(
                f"event {kind.name} scheduled at {fire_at}us, clock already at {self.now}us"
            )
        event = Event(int(fire_at), next(self._counter), kind, handler, args, tag)
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: SimTime, kind: EventKind, handler, *args, tag=()) -> Event:
        return self.schedule(self.now + delay, kind, handler, *args, tag=tag)

    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def run_until(self, predicate: Callable[[], bool] | None = None,
                  horizon: SimTime | None = None) -> RunOutcome:
        """Dispatch events until ``predicate()`` holds or the queue drains.

        With a ``horizon`` the loop also stops before the first event later
        than it; that case reports ``exhausted=False`` with the clock moved
        to the horizon.
        """
        queue = self._queue
        update = self._digest.update
        pack = struct.pack
        while True:
            if predicate is not None and predicate():
                return RunOutcome(self.now, exhausted=False)
            if not queue:
                return RunOutcome(self.now, exhausted=True)
            event = heapq.heappop(queue)
            if event.cancelled:
                continue
            if horizon is not None and event.fire_at > horizon:
                heapq.heappush(queue, event)
                self.now = horizon
                return RunOutcome(self.now, exhausted=False)
            self.now = event.fire_at
            update(pack("<Bq", event.kind, event.fire_at))
            if event.tag:
                update(pack(f"<{len(event.tag)}q", *event.tag))
            if self.log is not None:
                self.log.append((int(event.kind), event.fire_at, event.tag))
            self.dispatched += 1
            event.handler(*event.args)

    @property
    def digest(self) -> int:
        return int.from_bytes(self._digest.copy().digest(), "little")


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class RngStream:
    """xoshiro256** stream keyed by ``(seed, stream_id)``.

    The four state words are drawn from splitmix64 started at
    ``seed XOR (stream_id * 0xD1B54A32D192ED03)``.  ``uniform`` takes the top
    53 bits of each output.
    """

    __slots__ = ("seed", "stream_id", "_s0", "_s1", "_s2", "_s3", "_spare")

    def __init__(self, seed: int, stream_id: int = 0) -> None:
        self.seed = seed & _MASK64
        self.stream_id = stream_id
        sm = (self.seed ^ ((stream_id * 0xD1B54A32D192ED03) & _MASK64)) & _MASK64
        words = []
        for _ in range(4):
            sm, out = _splitmix64(sm)
            words.append(out)
        if not any(words):
            words[0] = 1
        self._s0, self._s1, self._s2, self._s3 = words
        self._spare: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        x = (s1 * 5) & _MASK64
        result = ((((x << 7) | (x >> 57)) & _MASK64) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def gauss(self) -> float:
        """Standard normal draw (Box-Muller, caching the second variate)."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)


def uniform_draw(stream: RngStream) -> float:
    return stream.uniform()


# Stream ids are derived from the path index so every stochastic source has
# its own sequence.
LOSS_STREAM = 0
JITTER_STREAM = 1


def path_stream_id(path_index: int, purpose: int) -> int:
    return 2 * path_index + purpose
