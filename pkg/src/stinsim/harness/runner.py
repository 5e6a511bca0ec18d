"""Build a simulation from a ScenarioConfig and run it."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..engine import (JITTER_STREAM, LOSS_STREAM, RngStream, Simulator, ms, path_stream_id,
                      seconds)
from ..linkmodel import (HandoverKind, HandoverPlan, Link, PathKind, PathProfile, RttProfileSpec,
                         RttShape, generate_profile, load_handover_schedule)
from ..metrics import RunMetrics, finalize
from ..schedulers import make_scheduler
from ..transport import Connection, TransportConfig
from .config import PathConfig, ScenarioConfig


def queue_packets(pc: PathConfig, scale_factor: float, mss: int) -> int | None:
    """Drop-tail limit holding ``queue_bdp`` times the path's minimum-RTT BDP."""
    if pc.queue_bdp <= 0:
        return None
    bdp = pc.bandwidth_mbps * 1e6 / scale_factor * pc.rtt.min_ms / 1e3 / (8 * mss)
    return max(2, math.ceil(pc.queue_bdp * bdp))


def build_profile(pc: PathConfig, scale_factor: float, horizon_us: int, mss: int = 1448) -> PathProfile:
    r = pc.rtt
    spec = RttProfileSpec(
        shape=RttShape(r.shape),
        min_rtt=ms(r.min_ms),
        max_rtt=ms(r.max_ms),
        period_s=r.period_s,
        trace_path=r.trace,
        phase_s=r.phase_s,
    )
    plan = None
    h = pc.handovers
    if h is not None:
        if h.schedule:
            plan = load_handover_schedule(h.schedule)
        elif h.count:
            plan = HandoverPlan(h.first_s, h.every_s, h.count, h.duration_s,
                                HandoverKind(h.kind), h.post_rtt_ms)
    return generate_profile(
        pc.id,
        PathKind(pc.kind),
        spec,
        plan,
        bandwidth_bps=pc.bandwidth_mbps * 1e6 / scale_factor,
        loss_rate=pc.loss_rate,
        jitter_stddev=ms(pc.jitter_ms),
        horizon=horizon_us if r.shape == "trace" else None,
        queue_limit=queue_packets(pc, scale_factor, mss),
    )


@dataclass
class Simulation:
    config: ScenarioConfig
    sim: Simulator
    conn: Connection
    profiles: list[PathProfile]

    def run(self) -> RunMetrics:
        horizon = seconds(self.config.horizon_s)
        self.sim.run_until(lambda: self.conn.done, horizon=horizon)
        return finalize(self.conn, self.config.scheduler.name, self.config.seed, horizon,
                        self.sim.digest, self.sim.dispatched, scenario=self.config.name)


def build(cfg: ScenarioConfig, record_log: bool = False) -> Simulation:
    horizon = seconds(cfg.horizon_s)
    profiles = [build_profile(pc, cfg.scale_factor, horizon, cfg.transport.mss) for pc in cfg.paths]
    links = [
        Link(p,
             RngStream(cfg.seed, path_stream_id(i, LOSS_STREAM)),
             RngStream(cfg.seed, path_stream_id(i, JITTER_STREAM)))
        for i, p in enumerate(profiles)
    ]
    index = {pc.id: i for i, pc in enumerate(cfg.paths)}
    subflow_paths = [index[p] for p in cfg.subflows] if cfg.subflows else None
    s = cfg.scheduler
    scheduler = make_scheduler(
        s.name, alpha=s.alpha, update_interval=ms(s.update_interval_ms),
        sigma_min=s.sigma_min, sigma_max=s.sigma_max, ecf_beta=s.ecf_beta,
        blest_lambda_step=s.blest_lambda_step, blest_lambda_max=s.blest_lambda_max,
    )
    t = cfg.transport
    tconf = TransportConfig(
        mss=t.mss,
        recv_window=cfg.scaled_segments(t.recv_window),
        sndbuf=cfg.scaled_segments(t.sndbuf),
        sndbuf_auto=t.sndbuf_auto,
        sndbuf_min=cfg.scaled_segments(t.sndbuf),
        initial_cwnd=t.initial_cwnd,
        initial_ssthresh=t.initial_ssthresh,
        rto_min=ms(t.rto_min_ms),
        dup_threshold=t.dup_threshold,
        idle_restart=t.idle_restart,
    )
    sim = Simulator()
    if record_log:
        sim.log = []
    conn = Connection(sim, links, scheduler, cfg.file_size_bytes, tconf, subflow_paths)
    conn.start(0)
    return Simulation(cfg, sim, conn, profiles)


def run_scenario(cfg: ScenarioConfig) -> RunMetrics:
    return build(cfg).run()
