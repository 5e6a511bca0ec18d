"""Packet schedulers.

Every scheduler answers one question per call of :meth:`Scheduler.decide`:
which subflow gets the segment at the head of the connection queue, or
``None`` to hold it back.  ``decide`` only reads state; anything a scheduler
must remember between calls is updated in the ``on_*`` hooks.

ECF and BLEST here are compact reconstructions of the published ideas, meant
as baselines rather than faithful ports of the kernel modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Sequence

from .engine import EventKind, SimTime, US_PER_S, ms
from .linkmodel import HandoverEvent, HandoverKind, PathProfile, handover_oracle

if TYPE_CHECKING:
    from .transport import Connection, SubflowState

DEFER = None


def estimate_latency(k: int, i: int, q: int, cwnd: int, srtt: float, delta: float, sigma: float) -> float:
    """Expected time until a newly queued segment is delivered on one subflow.

    ``(k + i + q) / cwnd * (srtt + delta) * sigma``; pass ``q=0`` for a
    subflow that still has window room.
    """
    if cwnd < 1:
        raise ValueError("cwnd must be >= 1; a subflow without window is unusable")
    if srtt <= 0 or sigma <= 0 or k < 0 or i < 0 or q < 0:
        raise ValueError("estimate_latency needs srtt, sigma > 0 and non-negative counts")
    return (k + i + q) / cwnd * (srtt + delta) * sigma


def estimate_latency_exact(k, i, q, cwnd, srtt, delta, sigma) -> Fraction:
    """Same formula in rational arithmetic."""
    return (Fraction(k) + Fraction(i) + Fraction(q)) / Fraction(cwnd) * (
        Fraction(srtt) + Fraction(delta)) * Fraction(sigma)


def _fastest(subflows: Sequence["SubflowState"]) -> "SubflowState":
    return min(subflows, key=lambda sf: (sf.srtt, sf.subflow_id))


class Scheduler:
    name = "base"
    tick_interval: SimTime | None = None

    def attach(self, conn: "Connection") -> None:
        pass

    def prepare(self, conn: "Connection", now: SimTime) -> None:
        pass

    def decide(self, conn: "Connection") -> int | None:
        raise NotImplementedError

    def on_dispatch(self, conn: "Connection", sf: "SubflowState") -> None:
        pass

    def on_ack(self, conn: "Connection", sf: "SubflowState") -> None:
        pass

    def on_hol(self, conn: "Connection", subflow_id: int) -> None:
        pass


# ALCS

def alcs_decide(k: int, subflows: Sequence["SubflowState"]) -> int | None:
    """Pick a subflow for the head segment or defer.

    Among available subflows the one with the smallest srtt goes first if it
    has window room.  Otherwise every available subflow gets a latency
    estimate (full ones including their sender queue) and the minimum wins;
    if the minimum belongs to a full subflow the segment waits.  Ties favour
    the fastest subflow, then the lower id.
    """
    usable = [sf for sf in subflows if sf.available]
    if not usable:
        return DEFER
    fast = _fastest(usable)
    if fast.has_headroom():
        return fast.subflow_id
    best_key = None
    best = None
    for sf in usable:
        room = sf.has_headroom()
        tl = estimate_latency(k, sf.inflight, 0 if room else sf.queued,
                              sf.cwnd, sf.srtt, sf.rttvar, sf.sigma)
        key = (tl, sf is not fast, sf.subflow_id)
        if best_key is None or key < best_key:
            best_key, best = key, sf
    if best.has_headroom():
        return best.subflow_id
    return DEFER


def sigma_update(sigma: float, atp: int, etp: int, alpha: float,
                 sigma_min: float, sigma_max: float) -> float:
    if atp > etp:
        sigma = sigma * alpha
    elif atp < etp:
        sigma = sigma / alpha
    return min(max(sigma, sigma_min), sigma_max)


def expected_packets(interval: SimTime, cwnd: int, srtt: float, delta: float, sigma: float) -> int:
    return int(math.floor(interval * cwnd / ((srtt + delta) * sigma)))


@dataclass
class CompensationState:
    alpha: float = 0.9
    interval: SimTime = ms(500)
    sigma_min: float = 0.25
    sigma_max: float = 4.0
    sigma: list[float] = field(default_factory=list)
    atp: list[int] = field(default_factory=list)
    etp: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.sigma_min <= 1.0 <= self.sigma_max:
            raise ValueError("sigma clamp must bracket 1.0")

    def reset(self, subflows: Sequence["SubflowState"]) -> None:
        n = len(subflows)
        self.sigma = [1.0] * n
        self.atp = [0] * n
        self.etp = [self._snapshot(sf, 1.0) for sf in subflows]
        for sf in subflows:
            sf.sigma = 1.0

    def _snapshot(self, sf: "SubflowState", sigma: float) -> int:
        return expected_packets(self.interval, sf.cwnd, sf.srtt, sf.rttvar, sigma)


def compensation_tick(comp: CompensationState, subflows: Sequence["SubflowState"]) -> list[float]:
    """One update-interval boundary: adjust sigma, clear atp, re-snapshot etp."""
    for idx, sf in enumerate(subflows):
        comp.sigma[idx] = sigma_update(comp.sigma[idx], comp.atp[idx], comp.etp[idx],
                                       comp.alpha, comp.sigma_min, comp.sigma_max)
        sf.sigma = comp.sigma[idx]
        comp.atp[idx] = 0
        comp.etp[idx] = comp._snapshot(sf, comp.sigma[idx])
    return list(comp.sigma)


def blackout_interval(event: HandoverEvent, srtt: float) -> tuple[SimTime, SimTime]:
    return (int(event.start - srtt), event.end)


class HandoverGuard:
    """Keeps a satellite subflow switched off around predicted disconnects.

    The blackout runs from one smoothed RTT before a disconnect starts until
    the disconnect is over.  RTT-shift handovers lose nothing and are ignored.
    """

    def __init__(self, profile: PathProfile) -> None:
        self.profile = profile
        self.pending: HandoverEvent | None = self._next_disconnect(0)
        self.blackouts: list[tuple[SimTime, SimTime]] = []

    def _next_disconnect(self, t: SimTime) -> HandoverEvent | None:
        event = handover_oracle(self.profile, t)
        while event is not None and event.kind is not HandoverKind.DISCONNECT:
            event = handover_oracle(self.profile, event.start + 1)
        return event

    def update(self, srtt: float, now: SimTime) -> bool:
        """Recompute availability at ``now``; returns True when usable."""
        event = self.pending
        while event is not None and now > event.end:
            event = self._next_disconnect(event.end)
        self.pending = event
        if event is None:
            return True
        start, end = blackout_interval(event, srtt)
        if start <= now <= end:
            if not self.blackouts or self.blackouts[-1][1] != end:
                self.blackouts.append((start, end))
            return False
        return True


def handover_guard_update(guard: HandoverGuard, sf: "SubflowState", now: SimTime) -> None:
    sf.available = guard.update(sf.srtt, now)


class Alcs(Scheduler):
    name = "alcs"

    def __init__(self, alpha: float = 0.9, update_interval: SimTime = ms(500),
                 sigma_min: float = 0.25, sigma_max: float = 4.0,
                 handover_guard: bool = True) -> None:
        self.compensation = CompensationState(alpha, update_interval, sigma_min, sigma_max)
        self.tick_interval = update_interval
        self.use_guard = handover_guard
        self.guards: dict[int, HandoverGuard] = {}

    def attach(self, conn: "Connection") -> None:
        self.compensation.reset(conn.subflows)
        sim = conn.sim
        if self.use_guard:
            for sf in conn.subflows:
                profile = sf.link.profile
                if sf.is_satellite and profile.outages:
                    self.guards[sf.subflow_id] = HandoverGuard(profile)
                    for start, end in profile.outages:
                        wake = max(sim.now, int(start - sf.srtt))
                        sim.schedule(wake, EventKind.HANDOVER_BOUNDARY, self._wake, conn,
                                     tag=(sf.subflow_id, start))
                        sim.schedule(end + 1, EventKind.HANDOVER_BOUNDARY, self._wake, conn,
                                     tag=(sf.subflow_id, end))
        sim.schedule(sim.now + self.tick_interval, EventKind.COMPENSATION_TICK, self._tick, conn)

    def _wake(self, conn: "Connection") -> None:
        conn.try_send()

    def _tick(self, conn: "Connection") -> None:
        if conn.done:
            return
        compensation_tick(self.compensation, conn.subflows)
        conn.sim.schedule(conn.sim.now + self.tick_interval, EventKind.COMPENSATION_TICK, self._tick, conn)
        conn.try_send()

    def prepare(self, conn: "Connection", now: SimTime) -> None:
        for sf_id, guard in self.guards.items():
            handover_guard_update(guard, conn.subflows[sf_id], now)

    def decide(self, conn: "Connection") -> int | None:
        return alcs_decide(conn.k, conn.subflows)

    def on_ack(self, conn: "Connection", sf: "SubflowState") -> None:
        self.compensation.atp[sf.subflow_id] += 1


# Baselines

def minrtt_decide(subflows: Sequence["SubflowState"]) -> int | None:
    best = None
    for sf in subflows:
        if sf.available and sf.has_headroom():
            if best is None or (sf.srtt, sf.subflow_id) < (best.srtt, best.subflow_id):
                best = sf
    return DEFER if best is None else best.subflow_id


class MinRtt(Scheduler):
    name = "minrtt"

    def decide(self, conn: "Connection") -> int | None:
        return minrtt_decide(conn.subflows)


def rr_decide(subflows: Sequence["SubflowState"], cursor: int) -> int | None:
    n = len(subflows)
    for step in range(n):
        sf = subflows[(cursor + step) % n]
        if sf.available and sf.has_headroom():
            return sf.subflow_id
    return DEFER


class RoundRobin(Scheduler):
    name = "rr"

    def __init__(self) -> None:
        self.cursor = 0

    def decide(self, conn: "Connection") -> int | None:
        return rr_decide(conn.subflows, self.cursor)

    def on_dispatch(self, conn: "Connection", sf: "SubflowState") -> None:
        self.cursor = (sf.subflow_id + 1) % len(conn.subflows)


def _fast_and_alternative(subflows):
    usable = [sf for sf in subflows if sf.available]
    if not usable:
        return None, None
    fast = _fastest(usable)
    alt = None
    for sf in usable:
        if sf is not fast and sf.has_headroom():
            if alt is None or (sf.srtt, sf.subflow_id) < (alt.srtt, alt.subflow_id):
                alt = sf
    return fast, alt


def ecf_decide(k: int, subflows: Sequence["SubflowState"], beta: float = 0.25) -> int | None:
    """Wait for the fastest subflow when it would still finish sooner.

    With ``n = k + i_f`` segments ahead, waiting costs about
    ``n / cwnd_f * srtt_f + srtt_f * (1 + beta)`` (plus the larger rttvar as
    hysteresis); using the alternative costs ``2 * srtt_s + srtt_s * (1 + beta)``.
    """
    fast, alt = _fast_and_alternative(subflows)
    if fast is None:
        return DEFER
    if fast.has_headroom():
        return fast.subflow_id
    if alt is None:
        return DEFER
    n = k + fast.outstanding_count
    delta = max(fast.rttvar, alt.rttvar)
    wait_fast = n / fast.cwnd * fast.srtt + fast.srtt * (1 + beta) + delta
    use_slow = 2 * alt.srtt + alt.srtt * (1 + beta)
    if wait_fast < use_slow:
        return DEFER
    return alt.subflow_id


class Ecf(Scheduler):
    name = "ecf"

    def __init__(self, beta: float = 0.25) -> None:
        self.beta = beta

    def decide(self, conn: "Connection") -> int | None:
        return ecf_decide(conn.k, conn.subflows, self.beta)


def blest_decide(subflows: Sequence["SubflowState"], send_window_free_bytes: float,
                 mss: int, lam: float) -> int | None:
    """Hold back from the slow subflow if the fast one could fill the window meanwhile."""
    fast, alt = _fast_and_alternative(subflows)
    if fast is None:
        return DEFER
    if fast.has_headroom():
        return fast.subflow_id
    if alt is None:
        return DEFER
    ratio = alt.srtt / fast.srtt
    x = mss * (fast.cwnd + (ratio - 1) / 2) * ratio * lam
    if x > send_window_free_bytes - (alt.outstanding_count + 1) * mss:
        return DEFER
    return alt.subflow_id


class Blest(Scheduler):
    name = "blest"

    def __init__(self, lambda_step: float = 0.05, lambda_decay_per_s: float = 0.01,
                 lambda_max: float = 1.3) -> None:
        self.lam = 1.0
        self.lambda_step = lambda_step
        self.lambda_max = lambda_max
        self.lambda_decay = lambda_decay_per_s
        self._last = 0

    def prepare(self, conn: "Connection", now: SimTime) -> None:
        elapsed = now - self._last
        if elapsed > 0:
            self.lam = max(1.0, self.lam - self.lambda_decay * elapsed / US_PER_S)
            self._last = now

    def decide(self, conn: "Connection") -> int | None:
        return blest_decide(conn.subflows, conn.send_window_free() * conn.mss, conn.mss, self.lam)

    def on_hol(self, conn: "Connection", subflow_id: int) -> None:
        fast = _fastest(conn.subflows)
        if subflow_id != fast.subflow_id:
            self.lam = min(self.lambda_max, self.lam + self.lambda_step)


SCHEDULER_NAMES = ("alcs", "minrtt", "rr", "ecf", "blest")


def make_scheduler(name: str, *, alpha: float = 0.9, update_interval: SimTime = ms(500),
                   sigma_min: float = 0.25, sigma_max: float = 4.0, ecf_beta: float = 0.25,
                   blest_lambda_step: float = 0.05, blest_lambda_max: float = 1.3) -> Scheduler:
    if name == "alcs":
        return Alcs(alpha, update_interval, sigma_min, sigma_max)
    if name == "minrtt":
        return MinRtt()
    if name == "rr":
        return RoundRobin()
    if name == "ecf":
        return Ecf(ecf_beta)
    if name == "blest":
        return Blest(blest_lambda_step, lambda_max=blest_lambda_max)
    raise ValueError(f"unknown scheduler {name!r}; expected one of {', '.join(SCHEDULER_NAMES)}")
