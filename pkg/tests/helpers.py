"""Shared generators for tests."""

from __future__ import annotations

import random

from ts_sandbox.e2lite import (
    AckStatus, ControlAck, E2Message, KpmIndication, RicControl, SubscriptionAck,
    SubscriptionRequest,
)
from ts_sandbox.sim.world import CellKpm, KpmReport, UeKpm

U32 = 2**32 - 1
U64 = 2**64 - 1


def _f(rng: random.Random) -> float:
    # mix of ordinary values, extremes and signed zero; NaN handled separately
    pick = rng.random()
    if pick < 0.1:
        return rng.choice([0.0, -0.0, 1e308, -1e308, 5e-324, float("inf"), float("-inf")])
    return rng.uniform(-1e6, 1e6)


def random_payload(rng: random.Random):
    kind = rng.randrange(5)
    if kind == 0:
        names = tuple("".join(rng.choice("abcxyzé_0") for _ in range(rng.randrange(12)))
                      for _ in range(rng.randrange(6)))
        return SubscriptionRequest(rng.randrange(U32 + 1), names)
    if kind == 1:
        return SubscriptionAck()
    if kind == 2:
        cell = CellKpm(rng.randrange(U32 + 1), *(_f(rng) for _ in range(6)))
        ues = []
        for _ in range(rng.randrange(5)):
            sinr = {rng.randrange(U32 + 1): _f(rng) for _ in range(rng.randrange(8))}
            ues.append(UeKpm(rng.randrange(U32 + 1), _f(rng), sinr))
        return KpmIndication(KpmReport(0, rng.randrange(U64 + 1), cell, ues))
    if kind == 3:
        return RicControl(rng.randrange(U32 + 1), rng.randrange(U32 + 1))
    return ControlAck(rng.randrange(U32 + 1), rng.randrange(U32 + 1), rng.choice(list(AckStatus)))


def random_message(rng: random.Random) -> E2Message:
    node = rng.randrange(U32 + 1)
    payload = random_payload(rng)
    if isinstance(payload, KpmIndication):
        payload.report.node_id = node
    return E2Message(node, rng.randrange(U64 + 1), payload)


def make_record(sinrs, serving, ue_id=0, t_ms=100, t_since=10_000, thr=1e6):
    """State record with the given SINR per cell id and neutral cell loads."""
    from ts_sandbox.ric.etl import ho_cost
    from ts_sandbox.ric.records import CellFeatures, UeStateRecord

    cells = [CellFeatures(cid, float(s), 10.0, 1.0, 50.0, 1.0, 0.0, 0.0,
                          ho_cost(t_since, 100, cid != serving))
             for cid, s in sorted(sinrs.items())]
    return UeStateRecord(ue_id, t_ms, t_since, serving, cells, thr)
