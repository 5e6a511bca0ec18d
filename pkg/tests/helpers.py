"""Small builders shared by the unit tests."""

from __future__ import annotations

from stinsim.engine import JITTER_STREAM, LOSS_STREAM, RngStream, Simulator, ms, path_stream_id
from stinsim.linkmodel import ConstantOwd, HandoverEvent, Link, PathKind, PathProfile
from stinsim.schedulers import make_scheduler
from stinsim.transport import Connection, SubflowState, TransportConfig


def profile(path_id="p", owd_ms=54.0, mbps=100.0, loss=0.0, jitter_us=0, handovers=(),
            kind=PathKind.TERRESTRIAL, owd=None, queue_limit=None) -> PathProfile:
    return PathProfile(path_id, kind, owd or ConstantOwd(ms(owd_ms)), mbps * 1e6, loss,
                       tuple(handovers), jitter_us, queue_limit)


def link(p: PathProfile, seed=1, index=0) -> Link:
    return Link(p, RngStream(seed, path_stream_id(index, LOSS_STREAM)),
                RngStream(seed, path_stream_id(index, JITTER_STREAM)))


def connection(profiles, scheduler="minrtt", file_size=100_000, seed=1, config=None, **sched_kw):
    sim = Simulator()
    links = [link(p, seed, i) for i, p in enumerate(profiles)]
    conn = Connection(sim, links, make_scheduler(scheduler, **sched_kw), file_size,
                      config or TransportConfig())
    return sim, conn


def subflow(subflow_id=0, srtt_ms=60.0, rttvar_ms=5.0, cwnd=10, outstanding=0, queued=0,
            sigma=1.0, available=True, kind=PathKind.TERRESTRIAL) -> SubflowState:
    """A detached subflow with hand-set scheduler inputs (times in microseconds)."""
    sf = SubflowState(subflow_id, subflow_id, link(profile(f"p{subflow_id}", kind=kind), index=subflow_id))
    sf.srtt = srtt_ms * 1000
    sf.rttvar = rttvar_ms * 1000
    sf.cwnd = cwnd
    sf.outstanding = {n: None for n in range(outstanding)}
    sf.queued = queued
    sf.sigma = sigma
    sf.available = available
    return sf


def disconnect(start_s: float, duration_s: float = 0.8) -> HandoverEvent:
    return HandoverEvent(int(start_s * 1e6), int(duration_s * 1e6))
