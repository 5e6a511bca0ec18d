import math
import random

import pytest

from stinsim.engine import ms, seconds
from stinsim.linkmodel import HandoverEvent, HandoverKind, PathKind
from stinsim.transport import RetransCause
from stinsim.schedulers import (Blest, CompensationState, HandoverGuard, alcs_decide, blackout_interval,
                                blest_decide, compensation_tick, ecf_decide, estimate_latency,
                                expected_packets, make_scheduler, minrtt_decide, rr_decide, sigma_update)

from .helpers import connection, disconnect, profile, subflow
from .oracles import latency_exact, latency_table, random_two_subflow_state, two_subflow_oracle


def test_latency_examples():
    assert estimate_latency(10, 5, 5, 10, ms(60), ms(5), 1.0) == ms(130)
    assert estimate_latency(0, 0, 0, 10, ms(60), ms(5), 1.0) == 0
    assert estimate_latency(10, 5, 5, 10, ms(60), ms(5), 2.0) == ms(260)


def test_latency_rejects_zero_window():
    with pytest.raises(ValueError):
        estimate_latency(1, 0, 0, 0, ms(60), ms(5), 1.0)


@pytest.mark.parametrize("row", latency_table(50))
def test_latency_matches_rational_oracle(row):
    got = estimate_latency(*row)
    want = latency_exact(*row)
    if want == 0:
        assert got == 0
    else:
        assert abs(got - float(want)) / float(want) <= 1e-12


def test_alcs_fast_subflow_with_room_wins_regardless_of_estimates():
    fast = subflow(0, srtt_ms=60, cwnd=10, outstanding=3, sigma=4.0)
    slow = subflow(1, srtt_ms=108, cwnd=100, outstanding=0, sigma=0.25)
    assert alcs_decide(1000, [fast, slow]) == 0


def test_alcs_defers_when_fast_estimate_is_lower():
    fast = subflow(0, srtt_ms=60, rttvar_ms=5, cwnd=10, outstanding=10, queued=5)
    slow = subflow(1, srtt_ms=108, rttvar_ms=2, cwnd=6, outstanding=2)
    assert estimate_latency(10, fast.inflight, fast.queued, 10, fast.srtt, fast.rttvar, 1) == ms(130)
    assert estimate_latency(10, slow.inflight, 0, 6, slow.srtt, slow.rttvar, 1) == ms(220)
    assert alcs_decide(10, [fast, slow]) is None


def test_alcs_sends_on_slow_when_fast_estimate_is_higher():
    fast = subflow(0, srtt_ms=60, rttvar_ms=5, cwnd=10, outstanding=10, queued=5, sigma=2.0)
    slow = subflow(1, srtt_ms=108, rttvar_ms=2, cwnd=6, outstanding=2)
    assert alcs_decide(10, [fast, slow]) == 1


def test_alcs_tie_defers_to_fast_subflow():
    slow = subflow(0, srtt_ms=120, rttvar_ms=10, cwnd=10, outstanding=5)  # (k+5)/10 * 130 ms
    fast = subflow(1, srtt_ms=60, rttvar_ms=5, cwnd=10, outstanding=10)   # (k+10)/10 * 65 ms
    assert estimate_latency(0, 5, 0, 10, slow.srtt, slow.rttvar, 1) == \
        estimate_latency(0, 10, 0, 10, fast.srtt, fast.rttvar, 1)
    assert alcs_decide(0, [slow, fast]) is None
    slow.sigma = 0.99
    assert alcs_decide(0, [slow, fast]) == 0


def test_alcs_unavailable_satellite_diverts():
    sat = subflow(0, srtt_ms=60, cwnd=10, outstanding=0, available=False, kind=PathKind.SATELLITE)
    terr = subflow(1, srtt_ms=108, cwnd=10, outstanding=4)
    assert alcs_decide(50, [sat, terr]) == 1
    terr.available = False
    assert alcs_decide(50, [sat, terr]) is None


def test_alcs_multi_subflow_argmin():
    fast = subflow(0, srtt_ms=40, rttvar_ms=0, cwnd=4, outstanding=4, queued=4)  # (8+0+4)/4*40 = 120
    mid = subflow(1, srtt_ms=80, rttvar_ms=0, cwnd=20, outstanding=2)           # (8+2)/20*80 = 40
    far = subflow(2, srtt_ms=240, rttvar_ms=0, cwnd=40, outstanding=0)          # 8/40*240 = 48
    assert alcs_decide(8, [fast, mid, far]) == 1
    mid.outstanding = {n: None for n in range(20)}                              # (8+20)/20*80 = 112
    assert alcs_decide(8, [fast, mid, far]) == 2
    far.sigma = 4.0                                                             # 192
    assert alcs_decide(8, [fast, mid, far]) is None


def test_two_subflow_rule_matches_literal_oracle():
    rng = random.Random(7)
    for _ in range(2000):
        k, subs = random_two_subflow_state(rng)
        assert alcs_decide(k, subs) == two_subflow_oracle(k, *subs)


def test_decisions_are_pure():
    rng = random.Random(3)
    for _ in range(200):
        k, subs = random_two_subflow_state(rng)
        before = [(sf.cwnd, len(sf.outstanding), sf.queued, sf.sigma, sf.available) for sf in subs]
        first = [alcs_decide(k, subs), minrtt_decide(subs), rr_decide(subs, 1), ecf_decide(k, subs),
                 blest_decide(subs, 100_000.0, 1448, 1.2)]
        again = [alcs_decide(k, subs), minrtt_decide(subs), rr_decide(subs, 1), ecf_decide(k, subs),
                 blest_decide(subs, 100_000.0, 1448, 1.2)]
        assert first == again
        assert before == [(sf.cwnd, len(sf.outstanding), sf.queued, sf.sigma, sf.available) for sf in subs]


# compensation

def test_sigma_examples():
    assert sigma_update(1.0, 120, 100, 0.9, 0.25, 4.0) == 0.9
    assert sigma_update(1.0, 80, 100, 0.9, 0.25, 4.0) == pytest.approx(1.1111111111111112, abs=0)
    assert sigma_update(1.3, 100, 100, 0.9, 0.25, 4.0) == 1.3
    assert sigma_update(0.26, 500, 1, 0.9, 0.25, 4.0) == 0.25
    assert sigma_update(3.9, 0, 1, 0.9, 0.25, 4.0) == 4.0


def test_sigma_bounded_under_any_sequence():
    rng = random.Random(5)
    sigma = 1.0
    for _ in range(5000):
        sigma = sigma_update(sigma, rng.randint(0, 10), rng.randint(0, 10), 0.9, 0.25, 4.0)
        assert 0.25 <= sigma <= 4.0


def test_expected_packets_snapshot():
    # 500 ms * 10 / 65 ms = 76.9 -> 76
    assert expected_packets(ms(500), 10, ms(60), ms(5), 1.0) == 76
    assert expected_packets(ms(500), 10, ms(60), ms(5), 2.0) == 38


def test_compensation_tick_resets_atp_and_snapshots_etp():
    comp = CompensationState(alpha=0.9, interval=ms(500))
    subs = [subflow(0, srtt_ms=60, rttvar_ms=5, cwnd=10), subflow(1, srtt_ms=108, rttvar_ms=2, cwnd=20)]
    comp.reset(subs)
    assert comp.etp == [76, 90]
    comp.atp = [100, 10]
    assert compensation_tick(comp, subs) == [0.9, pytest.approx(1 / 0.9)]
    assert comp.atp == [0, 0]
    assert comp.etp == [math.floor(ms(500) * 10 / (ms(65) * 0.9)), math.floor(ms(500) * 20 / (ms(110) / 0.9))]
    assert subs[0].sigma == 0.9


def test_sigma_rises_when_actual_latency_exceeds_estimate():
    # a subflow that delivers half of what the model predicts drives sigma up
    comp = CompensationState(alpha=0.9, interval=ms(500))
    sf = subflow(0, srtt_ms=60, rttvar_ms=5, cwnd=10)
    comp.reset([sf])
    rng = random.Random(11)
    for _ in range(25):
        comp.atp[0] = int(comp.etp[0] * rng.uniform(0.3, 0.7) * sf.sigma)
        compensation_tick(comp, [sf])
    assert sf.sigma > 2.0


# handover guard

def test_blackout_interval_by_hand():
    ev = HandoverEvent(seconds(10), ms(800))
    assert blackout_interval(ev, ms(60)) == (seconds(9.94), seconds(10.8))


def test_guard_availability_over_time():
    p = profile(kind=PathKind.SATELLITE, handovers=[disconnect(10)])
    guard = HandoverGuard(p)
    assert guard.update(ms(60), seconds(9.93))
    assert not guard.update(ms(60), seconds(9.94))
    assert not guard.update(ms(60), seconds(10.8))
    assert guard.update(ms(60), seconds(10.81))
    assert guard.blackouts == [(seconds(9.94), seconds(10.8))]


def test_guard_without_handovers_or_with_shift_only():
    assert HandoverGuard(profile()).update(ms(60), seconds(5))
    shift = HandoverEvent(seconds(5), seconds(1), HandoverKind.RTT_SHIFT, ms(40))
    guard = HandoverGuard(profile(handovers=[shift]))
    assert guard.update(ms(60), seconds(5.5)) and guard.pending is None


# baselines

def test_minrtt_rules():
    fast = subflow(0, srtt_ms=30, cwnd=4, outstanding=4)
    slow = subflow(1, srtt_ms=50, cwnd=4, outstanding=1)
    assert minrtt_decide([fast, slow]) == 1
    slow.outstanding = {n: None for n in range(4)}
    assert minrtt_decide([fast, slow]) is None
    a, b = subflow(0, srtt_ms=40, outstanding=0), subflow(1, srtt_ms=40, outstanding=0)
    assert minrtt_decide([b, a]) == 0


def test_round_robin_rotation():
    subs = [subflow(i, cwnd=100) for i in range(4)]
    rr = make_scheduler("rr")

    class Conn:
        subflows = subs
    picks = []
    for _ in range(8):
        choice = rr.decide(Conn)
        picks.append(choice)
        rr.on_dispatch(Conn, subs[choice])
    assert picks == [0, 1, 2, 3, 0, 1, 2, 3]
    subs[1].cwnd = 0
    assert rr_decide(subs[:2], 1) == 0


def test_ecf_rules():
    fast = subflow(0, srtt_ms=20, rttvar_ms=1, cwnd=10, outstanding=10)
    slow = subflow(1, srtt_ms=200, rttvar_ms=1, cwnd=10, outstanding=0)
    assert ecf_decide(5, [fast, slow]) is None        # (15/10)*20 + 25 + 1 = 56 < 650
    assert ecf_decide(5000, [fast, slow]) == 1        # 10,026 > 650
    fast.outstanding = {n: None for n in range(3)}
    assert ecf_decide(5000, [fast, slow]) == 0


def test_blest_rules():
    fast = subflow(0, srtt_ms=20, cwnd=10, outstanding=10)
    slow = subflow(1, srtt_ms=60, cwnd=10, outstanding=3)
    # X = 1448 * (10 + 1) * 3 * 1.0 = 47,784 B
    assert blest_decide([fast, slow], 20 * 1448, 1448, 1.0) is None
    assert blest_decide([fast, slow], 1000 * 1448, 1448, 1.0) == 1
    fast.outstanding = {n: None for n in range(2)}
    assert blest_decide([fast, slow], 0, 1448, 1.0) == 0


def test_blest_lambda_steps_decays_and_caps():
    b = Blest(lambda_step=0.05, lambda_decay_per_s=0.01, lambda_max=1.3)

    class Conn:
        subflows = [subflow(0, srtt_ms=20), subflow(1, srtt_ms=60)]
    b.on_hol(Conn, 1)
    assert b.lam == pytest.approx(1.05)
    b.on_hol(Conn, 0)
    assert b.lam == pytest.approx(1.05)
    b.prepare(Conn, seconds(2))
    assert b.lam == pytest.approx(1.03)
    for _ in range(100):
        b.on_hol(Conn, 1)
    assert b.lam == 1.3


def test_alcs_fast_path_dominance_in_a_run():
    sat = profile("sat", 30, 50, kind=PathKind.SATELLITE, handovers=[disconnect(1.0)], jitter_us=500, loss=0.001)
    sim, conn = connection([sat, profile("terr", 54, 100, jitter_us=500)], "alcs", file_size=3000 * 1448)
    violations = []
    decide = conn.scheduler.decide

    def checked(c):
        choice = decide(c)
        usable = [sf for sf in c.subflows if sf.available]
        if usable:
            fast = min(usable, key=lambda sf: (sf.srtt, sf.subflow_id))
            if fast.has_headroom() and choice != fast.subflow_id:
                violations.append((c.sim.now, choice))
        return choice
    conn.scheduler.decide = checked
    conn.start(0)
    sim.run_until(lambda: conn.done)
    assert conn.done and violations == []


def test_alcs_never_sends_into_a_blackout():
    sat = profile("sat", 30, 50, kind=PathKind.SATELLITE,
                  handovers=[disconnect(1.0), disconnect(3.0), disconnect(5.0)])
    sim, conn = connection([sat, profile("terr", 54, 100)], "alcs", file_size=6000 * 1448)
    conn.dispatch_log = []
    conn.start(0)
    sim.run_until(lambda: conn.done)
    blackouts = conn.scheduler.guards[0].blackouts
    assert len(blackouts) == 3
    for t, sf_id, _, _ in conn.dispatch_log:
        if sf_id == 0:
            assert not any(a <= t <= b for a, b in blackouts)
    assert conn.retrans[RetransCause.HANDOVER] == 0
