"""Independent reference implementations used to check the scheduler code."""

from __future__ import annotations

import random
from fractions import Fraction

from .helpers import subflow


def latency_exact(k, i, q, cwnd, srtt, delta, sigma) -> Fraction:
    return Fraction(k + i + q, cwnd) * (Fraction(srtt) + Fraction(delta)) * Fraction(sigma)


def latency_table(n: int = 50, seed: int = 1) -> list[tuple]:
    """Hand-checkable cases first, then random ones."""
    rows = [
        (10, 5, 5, 10, 60_000.0, 5_000.0, 1.0),
        (0, 0, 0, 10, 60_000.0, 5_000.0, 1.0),
        (10, 5, 5, 10, 60_000.0, 5_000.0, 2.0),
        (10, 2, 0, 6, 108_000.0, 2_000.0, 1.0),
    ]
    rng = random.Random(seed)
    while len(rows) < n:
        rows.append((rng.randint(0, 5000), rng.randint(0, 500), rng.randint(0, 500), rng.randint(1, 400),
                     rng.uniform(1_000, 900_000), rng.uniform(0, 200_000), rng.uniform(0.25, 4.0)))
    return rows


def two_subflow_oracle(k, a, b):
    """Literal two-subflow rule: send on the fast subflow if it has room,
    otherwise compare tl_f (with its queue) against tl_s and defer when
    tl_f <= tl_s."""
    usable = [sf for sf in (a, b) if sf.available]
    if not usable:
        return None
    if len(usable) == 1:
        only = usable[0]
        return only.subflow_id if len(only.outstanding) < only.cwnd else None
    fast, slow = sorted(usable, key=lambda sf: (sf.srtt, sf.subflow_id))
    if len(fast.outstanding) < fast.cwnd:
        return fast.subflow_id
    if len(slow.outstanding) >= slow.cwnd:
        return None
    tl_f = latency_exact(k, len(fast.outstanding) - fast.queued, fast.queued, fast.cwnd,
                         fast.srtt, fast.rttvar, fast.sigma)
    tl_s = latency_exact(k, len(slow.outstanding) - slow.queued, 0, slow.cwnd,
                         slow.srtt, slow.rttvar, slow.sigma)
    return None if tl_f <= tl_s else slow.subflow_id


def random_two_subflow_state(rng: random.Random):
    subs = []
    for sid in (0, 1):
        cwnd = rng.randint(1, 60)
        outstanding = rng.choice([cwnd, cwnd, rng.randint(0, cwnd)])
        subs.append(subflow(
            sid,
            srtt_ms=rng.choice([rng.randint(20, 200), 60, 108]),
            rttvar_ms=rng.randint(0, 40),
            cwnd=cwnd,
            outstanding=outstanding,
            queued=rng.randint(0, outstanding),
            sigma=rng.choice([0.25, 0.5, 0.9, 1.0, 1.25, 2.0, 4.0, rng.uniform(0.25, 4.0)]),
            available=rng.random() > 0.1,
        ))
    return rng.randint(0, 3000), subs
