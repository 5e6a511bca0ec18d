"""Subflow transport and the MPTCP connection level.

Each subflow runs NewReno-style AIMD with the usual smoothed RTT estimator.
Loss recovery is connection-level: segments a subflow declares lost go back
to the connection and the active scheduler picks a path for them again.
The receiver keeps a reorder buffer and delivers in conn_seq order.
"""

from __future__ import annotations

import bisect
import enum
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, NamedTuple

from .engine import EventKind, SimTime, Simulator, ms
from .linkmodel import Delivered, Link, LossCause, PathKind

if TYPE_CHECKING:
    from .schedulers import Scheduler

DEFAULT_MSS = 1448


class RetransCause(str, enum.Enum):
    HANDOVER = "handover"
    RANDOM = "random"
    CONGESTION = "congestion"
    SPURIOUS = "spurious"


class Detection(str, enum.Enum):
    TIMEOUT = "timeout"
    DUP_THRESHOLD = "dup_threshold"


def segment_sizes(nbytes: int, mss: int = DEFAULT_MSS) -> list[int]:
    full, rest = divmod(nbytes, mss)
    return [mss] * full + ([rest] if rest else [])


def loss_cause_to_retrans(cause: LossCause | None) -> RetransCause:
    """Retransmission cause implied by a transmission's link truth."""
    if cause is LossCause.HANDOVER:
        return RetransCause.HANDOVER
    if cause is LossCause.RANDOM:
        return RetransCause.RANDOM
    if cause is LossCause.CONGESTION:
        return RetransCause.CONGESTION
    return RetransCause.SPURIOUS


class Transmission:
    __slots__ = ("segment", "subflow_id", "sub_seq", "t_send", "departed_at",
                 "arrival", "cause", "acked", "declared_lost", "retrans_cause")

    def __init__(self, segment: "Segment", subflow_id: int, sub_seq: int, t_send: SimTime) -> None:
        self.segment = segment
        self.subflow_id = subflow_id
        self.sub_seq = sub_seq
        self.t_send = t_send
        self.departed_at = t_send
        self.arrival: SimTime | None = None
        self.cause: LossCause | None = None  # link truth; None means it got through
        self.acked = False
        self.declared_lost = False
        self.retrans_cause: "RetransCause | None" = None


class Segment:
    __slots__ = ("conn_seq", "size", "transmissions", "delivered", "pending_cause", "queued")

    def __init__(self, conn_seq: int, size: int) -> None:
        self.conn_seq = conn_seq
        self.size = size
        self.transmissions: list[Transmission] = []
        self.delivered = False
        self.pending_cause: RetransCause | None = None
        self.queued = False


# Congestion control

class CcState(NamedTuple):
    cwnd: int
    ssthresh: int
    ca_count: int = 0


class CcEvent(str, enum.Enum):
    ACK = "ack"
    LOSS = "loss"
    TIMEOUT = "timeout"


def cc_newreno(state: CcState, event: CcEvent) -> CcState:
    cwnd, ssthresh, count = state
    if event is CcEvent.ACK:
        if cwnd < ssthresh:
            return CcState(cwnd + 1, ssthresh, 0)
        count += 1
        if count >= cwnd:
            return CcState(cwnd + 1, ssthresh, 0)
        return CcState(cwnd, ssthresh, count)
    ssthresh = max(cwnd // 2, 2)
    if event is CcEvent.LOSS:
        return CcState(ssthresh, ssthresh, 0)
    return CcState(1, ssthresh, 0)


def cwnd_after_idle(state: CcState, idle: SimTime, rto: SimTime, restart_cwnd: int) -> CcState:
    """Window to resume with after ``idle`` microseconds with nothing in flight.

    Mirrors the usual slow-start-after-idle rule: ssthresh keeps 3/4 of the
    old window, then cwnd halves once per elapsed RTO but not below
    min(restart_cwnd, cwnd).
    """
    cwnd, ssthresh, _ = state
    if idle <= rto:
        return state
    ssthresh = max(ssthresh, (cwnd >> 1) + (cwnd >> 2))
    floor = min(restart_cwnd, cwnd)
    delta = idle - rto
    while delta > 0 and cwnd > floor:
        cwnd >>= 1
        delta -= rto
    return CcState(max(cwnd, floor), ssthresh, 0)


class NewReno:
    """Pluggable congestion-control contract; state lives on the subflow."""

    name = "newreno"

    def __init__(self, initial_cwnd: int = 10, initial_ssthresh: int = 64) -> None:
        self.initial_cwnd = initial_cwnd
        self.initial_ssthresh = initial_ssthresh

    def init(self, sf: "SubflowState") -> None:
        sf.cwnd, sf.ssthresh, sf.ca_count = self.initial_cwnd, self.initial_ssthresh, 0

    def _apply(self, sf: "SubflowState", event: CcEvent) -> None:
        sf.cwnd, sf.ssthresh, sf.ca_count = cc_newreno(CcState(sf.cwnd, sf.ssthresh, sf.ca_count), event)

    def on_ack(self, sf: "SubflowState") -> None:
        self._apply(sf, CcEvent.ACK)

    def on_loss(self, sf: "SubflowState") -> None:
        self._apply(sf, CcEvent.LOSS)

    def on_timeout(self, sf: "SubflowState") -> None:
        self._apply(sf, CcEvent.TIMEOUT)

    def on_idle(self, sf: "SubflowState", idle: SimTime) -> None:
        state = CcState(sf.cwnd, sf.ssthresh, sf.ca_count)
        sf.cwnd, sf.ssthresh, sf.ca_count = cwnd_after_idle(state, idle, sf.rto, self.initial_cwnd)


# RTT estimation

def rtt_update(srtt: float | None, rttvar: float | None, sample: float) -> tuple[float, float]:
    if srtt is None:
        return float(sample), sample / 2
    rttvar = 0.75 * rttvar + 0.25 * abs(srtt - sample)
    srtt = 0.875 * srtt + 0.125 * sample
    return srtt, rttvar


def compute_rto(srtt: float, rttvar: float, rto_min: SimTime, rto_max: SimTime) -> SimTime:
    return int(min(max(srtt + 4 * rttvar, rto_min), rto_max))


@dataclass
class TransportConfig:
    mss: int = DEFAULT_MSS
    recv_window: int = 4096  # segments
    initial_cwnd: int = 10
    initial_ssthresh: int = 64
    rto_min: SimTime = ms(200)
    rto_max: SimTime = ms(60_000)
    dup_threshold: int = 3
    # connection send buffer in segments (written but not data-acked);
    # 0 means the whole file is queued at once.  With sndbuf_auto > 0 the
    # capacity follows sndbuf_auto * sum(cwnd), never below sndbuf_min.
    sndbuf: int = 0
    sndbuf_auto: float = 0.0
    sndbuf_min: int = 0
    # restart the window of a subflow that sat idle for longer than its RTO
    idle_restart: bool = True
    series_interval: SimTime = 0  # 0 disables per-subflow time series


class SubflowState:
    def __init__(self, subflow_id: int, path_index: int, link: Link) -> None:
        self.subflow_id = subflow_id
        self.path_index = path_index
        self.link = link
        self.path_id = link.profile.path_id
        self.is_satellite = link.profile.kind is PathKind.SATELLITE
        self.srtt: float | None = None
        self.rttvar: float | None = None
        self.cwnd = 1
        self.ssthresh = 64
        self.ca_count = 0
        self.outstanding: dict[int, Transmission] = {}
        # departure times of outstanding transmissions still in the sender queue
        self.backlog: deque[SimTime] = deque()
        self.queued = 0
        self.sigma = 1.0
        self.available = True
        self.rto: SimTime = ms(1000)
        self.backoff = 1
        self.rto_deadline: SimTime | None = None
        self.timer = None
        self.next_sub_seq = 0
        self.recovery_point = 0
        self.last_send: SimTime | None = None
        # counters
        self.sent = 0
        self.acked = 0
        self.bytes_sent = 0
        self.timeouts = 0

    @property
    def inflight(self) -> int:
        """Outstanding transmissions that have left the sender queue."""
        return len(self.outstanding) - self.queued

    @property
    def local_queue(self) -> int:
        return self.queued

    @property
    def outstanding_count(self) -> int:
        return len(self.outstanding)

    def has_headroom(self) -> bool:
        return len(self.outstanding) < self.cwnd

    def refresh_queue(self, now: SimTime) -> None:
        backlog = self.backlog
        while backlog and backlog[0] <= now:
            backlog.popleft()
        self.queued = len(backlog)

    def __repr__(self) -> str:
        return (f"SubflowState(id={self.subflow_id}, path={self.path_id}, srtt={self.srtt}, "
                f"cwnd={self.cwnd}, out={len(self.outstanding)}, sigma={self.sigma:.3f}, "
                f"available={self.available})")


class Receiver:
    """Reorder buffer with a cumulative in-order point."""

    def __init__(self, total_segments: int, recv_window: int) -> None:
        self.total = total_segments
        self.recv_window = recv_window
        self.cum = 0
        self.buffer: set[int] = set()
        self.max_occupancy = 0
        self.duplicates = 0
        self.delivered_order: list[int] | None = None
        self.delivered = 0

    def receive(self, conn_seq: int) -> int:
        """Accept a segment; returns how many segments became deliverable."""
        if conn_seq < self.cum or conn_seq in self.buffer:
            self.duplicates += 1
            return 0
        if conn_seq >= self.cum + self.recv_window:
            raise AssertionError(f"segment {conn_seq} beyond receive window at {self.cum}")
        if conn_seq != self.cum:
            self.buffer.add(conn_seq)
            if len(self.buffer) > self.max_occupancy:
                self.max_occupancy = len(self.buffer)
            return 0
        start = self.cum
        cum = conn_seq + 1
        buffer = self.buffer
        while cum in buffer:
            buffer.remove(cum)
            cum += 1
        self.cum = cum
        n = cum - start
        self.delivered += n
        if self.delivered_order is not None:
            self.delivered_order.extend(range(start, cum))
        return n

    @property
    def complete(self) -> bool:
        return self.cum >= self.total


class Connection:
    """One MPTCP connection transferring a file from t = start_at."""

    def __init__(
        self,
        sim: Simulator,
        links: list[Link],
        scheduler: "Scheduler",
        file_size: int,
        config: TransportConfig | None = None,
        subflow_paths: list[int] | None = None,
        cc: NewReno | None = None,
    ) -> None:
        self.sim = sim
        self.config = config or TransportConfig()
        self.mss = self.config.mss
        self.scheduler = scheduler
        self.cc = cc or NewReno(self.config.initial_cwnd, self.config.initial_ssthresh)
        self.links = links
        if subflow_paths is None:
            subflow_paths = list(range(len(links)))
        self.subflows = [SubflowState(i, p, links[p]) for i, p in enumerate(subflow_paths)]
        for sf in self.subflows:
            self.cc.init(sf)
        self.file_size = file_size
        self.total_segments = len(segment_sizes(file_size, self.mss))
        self.segments: list[Segment] = []
        self.bytes_written = 0
        self.send_buffer: deque[Segment] = deque()
        self.retx: list[tuple[int, Segment]] = []
        self.snd_una = 0
        self.recv_window = self.config.recv_window
        self.receiver = Receiver(self.total_segments, self.recv_window)
        self.start_at: SimTime | None = None
        self.completed_at: SimTime | None = None
        # statistics
        self.retrans = {c: 0 for c in RetransCause}
        self.original_sends = 0
        self.defers = 0
        self.window_blocked = 0
        self.late_acks = 0
        self.series: dict[str, list[tuple[SimTime, float]]] = {}
        self._last_series: list[SimTime] = [-(1 << 62)] * len(self.subflows)
        self._app_pending = 0
        self._hol_seq = -1
        self.dispatch_log: list[tuple[SimTime, int, int, bool]] | None = None

    # application side

    @property
    def done(self) -> bool:
        return self.completed_at is not None

    @property
    def k(self) -> int:
        """Segments waiting at the connection level for a scheduling decision."""
        return len(self.send_buffer) + len(self.retx)

    def send_window_free(self) -> int:
        """Segments that may still be sent before hitting the receive window."""
        next_new = len(self.segments) - len(self.send_buffer)
        return max(0, self.snd_una + self.recv_window - next_new)

    def start(self, at: SimTime = 0) -> None:
        """Handshake is free; each subflow's RTT estimate is seeded from it."""
        self.start_at = at
        for sf in self.subflows:
            link = sf.link
            fwd = link.profile.base_owd(at)
            sf.srtt, sf.rttvar = rtt_update(None, None, 2 * fwd)
            sf.rto = compute_rto(sf.srtt, sf.rttvar, self.config.rto_min, self.config.rto_max)
        self.scheduler.attach(self)
        self.sim.schedule(at, EventKind.APP_WRITE, self.on_app_write, self.file_size, tag=(self.file_size,))

    def on_app_write(self, nbytes: int) -> None:
        self._app_pending += nbytes
        self._refill()
        self.try_send()

    def sndbuf_capacity(self) -> int:
        conf = self.config
        if conf.sndbuf_auto > 0:
            return max(conf.sndbuf_min, int(conf.sndbuf_auto * sum(sf.cwnd for sf in self.subflows)))
        return conf.sndbuf

    def _refill(self) -> None:
        cap = self.sndbuf_capacity()
        while self._app_pending > 0:
            if cap and len(self.segments) - self.snd_una >= cap:
                return
            size = min(self.mss, self._app_pending)
            seg = Segment(len(self.segments), size)
            seg.queued = True
            self.segments.append(seg)
            self.send_buffer.append(seg)
            self._app_pending -= size
            self.bytes_written += size

    # sending

    def _head(self) -> Segment | None:
        while self.retx:
            seg = self.retx[0][1]
            if seg.conn_seq < self.snd_una:
                bisect_pop(self.retx)
                seg.queued = False
                continue
            return seg
        while self.send_buffer:
            seg = self.send_buffer[0]
            if seg.conn_seq < self.snd_una:
                self.send_buffer.popleft()
                seg.queued = False
                continue
            return seg
        return None

    def _pop_head(self) -> Segment:
        if self.retx:
            return bisect_pop(self.retx)
        return self.send_buffer.popleft()

    def try_send(self) -> int:
        if self.done:
            return 0
        sim = self.sim
        now = sim.now
        sent = 0
        scheduler = self.scheduler
        while True:
            head = self._head()
            if head is None:
                break
            if head.conn_seq >= self.snd_una + self.recv_window:
                self.window_blocked += 1
                break
            for sf in self.subflows:
                sf.refresh_queue(now)
            scheduler.prepare(self, now)
            choice = scheduler.decide(self)
            if choice is None:
                self.defers += 1
                if self.dispatch_log is not None:
                    self.dispatch_log.append((now, -1, head.conn_seq, False))
                break
            sf = self.subflows[choice]
            if not sf.available or not sf.has_headroom():
                raise AssertionError(f"{scheduler.name} chose unusable subflow {sf!r}")
            seg = self._pop_head()
            seg.queued = False
            self._transmit(seg, sf)
            scheduler.on_dispatch(self, sf)
            sent += 1
        return sent

    def _transmit(self, seg: Segment, sf: SubflowState) -> None:
        sim = self.sim
        now = sim.now
        retransmission = bool(seg.transmissions)
        if retransmission:
            cause = seg.pending_cause or RetransCause.SPURIOUS
            self.retrans[cause] += 1
            seg.pending_cause = None
        else:
            self.original_sends += 1
        if self.dispatch_log is not None:
            self.dispatch_log.append((now, sf.subflow_id, seg.conn_seq, retransmission))
        if self.config.idle_restart and not sf.outstanding and sf.last_send is not None:
            self.cc.on_idle(sf, now - sf.last_send)
        sf.last_send = now
        tx = Transmission(seg, sf.subflow_id, sf.next_sub_seq, now)
        sf.next_sub_seq += 1
        seg.transmissions.append(tx)
        sf.outstanding[tx.sub_seq] = tx
        sf.sent += 1
        sf.bytes_sent += seg.size
        outcome = sf.link.transmit(seg.size, now)
        tx.departed_at = outcome.departed_at
        if outcome.departed_at > now:
            sf.backlog.append(outcome.departed_at)
            sf.queued = len(sf.backlog)
        if isinstance(outcome, Delivered):
            tx.arrival = outcome.delivered_at
            sim.schedule(outcome.delivered_at, EventKind.SEGMENT_ARRIVAL, self._on_segment_arrival, tx,
                         tag=(sf.subflow_id, seg.conn_seq))
        else:
            tx.cause = outcome.cause
        if sf.rto_deadline is None:
            self._arm_timer(sf)

    # timers

    def _arm_timer(self, sf: SubflowState) -> None:
        if not sf.outstanding:
            sf.rto_deadline = None
            return
        deadline = self.sim.now + sf.rto * sf.backoff
        sf.rto_deadline = deadline
        if sf.timer is None or sf.timer.cancelled or sf.timer.fire_at > deadline:
            if sf.timer is not None:
                sf.timer.cancel()
            sf.timer = self.sim.schedule(deadline, EventKind.TIMEOUT, self._on_timer, sf,
                                         tag=(sf.subflow_id,))

    def _on_timer(self, sf: SubflowState) -> None:
        sf.timer = None
        if sf.rto_deadline is None or self.done:
            return
        now = self.sim.now
        if now < sf.rto_deadline:
            sf.timer = self.sim.schedule(sf.rto_deadline, EventKind.TIMEOUT, self._on_timer, sf,
                                         tag=(sf.subflow_id,))
            return
        self._on_timeout(sf)

    def _on_timeout(self, sf: SubflowState) -> None:
        sf.timeouts += 1
        lost = list(sf.outstanding.values())
        sf.outstanding.clear()
        sf.backlog.clear()
        sf.queued = 0
        sf.rto_deadline = None
        for tx in lost:
            self.on_loss(sf, tx, Detection.TIMEOUT)
        self.cc.on_timeout(sf)
        sf.recovery_point = sf.next_sub_seq
        sf.backoff = min(sf.backoff * 2, 64)
        self.try_send()

    # loss handling

    def on_loss(self, sf: SubflowState, tx: Transmission, detection: Detection) -> None:
        """Record a loss declaration and hand the segment back to the scheduler."""
        tx.declared_lost = True
        seg = tx.segment
        cause = loss_cause_to_retrans(tx.cause)
        if cause is RetransCause.SPURIOUS and sf.link.profile.outage_overlapping(tx.t_send, self.sim.now):
            # delivered, but the ACK was held by a disconnect until the RTO fired
            cause = RetransCause.HANDOVER
        tx.retrans_cause = cause
        if seg.conn_seq < self.snd_una or seg.queued:
            return
        seg.pending_cause = cause
        seg.queued = True
        bisect.insort(self.retx, (seg.conn_seq, seg))
        if detection is Detection.DUP_THRESHOLD and tx.sub_seq >= sf.recovery_point:
            self.cc.on_loss(sf)
            sf.recovery_point = sf.next_sub_seq

    # receive side

    def _on_segment_arrival(self, tx: Transmission) -> None:
        seg = tx.segment
        receiver = self.receiver
        now = self.sim.now
        newly = receiver.receive(seg.conn_seq)
        seg.delivered = True
        if newly == 0 and seg.conn_seq > receiver.cum and receiver.cum != self._hol_seq:
            self._hol_seq = receiver.cum
            missing = self.segments[receiver.cum]
            if missing.transmissions:
                self.scheduler.on_hol(self, missing.transmissions[-1].subflow_id)
        if receiver.complete and self.completed_at is None:
            self.completed_at = now
        sf = self.subflows[tx.subflow_id]
        ack_at = sf.link.ack_arrival(now)
        self.sim.schedule(ack_at, EventKind.ACK_ARRIVAL, self.on_ack, sf, tx, receiver.cum,
                          tag=(sf.subflow_id, seg.conn_seq, receiver.cum))

    def on_ack(self, sf: SubflowState, tx: Transmission, data_ack: int) -> None:
        if self.done:
            return
        now = self.sim.now
        if sf.outstanding.pop(tx.sub_seq, None) is not None:
            tx.acked = True
            sf.acked += 1
            sf.srtt, sf.rttvar = rtt_update(sf.srtt, sf.rttvar, now - tx.t_send)
            sf.rto = compute_rto(sf.srtt, sf.rttvar, self.config.rto_min, self.config.rto_max)
            sf.backoff = 1
            self.cc.on_ack(sf)
            self.scheduler.on_ack(self, sf)
            threshold = tx.sub_seq - self.config.dup_threshold
            if sf.outstanding and next(iter(sf.outstanding)) <= threshold:
                lost = []
                for sub_seq, other in sf.outstanding.items():
                    if sub_seq > threshold:
                        break
                    lost.append(other)
                for other in lost:
                    del sf.outstanding[other.sub_seq]
                    self.on_loss(sf, other, Detection.DUP_THRESHOLD)
            sf.rto_deadline = None
            self._arm_timer(sf)
            if self.config.series_interval:
                self._sample_series(sf, now)
        else:
            self.late_acks += 1
        if data_ack > self.snd_una:
            self.snd_una = data_ack
        if self._app_pending:
            self._refill()
        self.try_send()

    def _sample_series(self, sf: SubflowState, now: SimTime) -> None:
        i = sf.subflow_id
        if now - self._last_series[i] < self.config.series_interval:
            return
        self._last_series[i] = now
        for name, value in (("rtt", sf.srtt), ("cwnd", sf.cwnd), ("sigma", sf.sigma),
                            ("inflight", len(sf.outstanding))):
            self.series.setdefault(f"{name}.{sf.path_id}", []).append((now, float(value)))


def bisect_pop(queue: list[tuple[int, Segment]]) -> Segment:
    return queue.pop(0)[1]
