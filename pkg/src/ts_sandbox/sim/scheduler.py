"""Equal-share round-robin PRB scheduler.

The discipline is defined PRB by PRB: each PRB of a slot goes to the next
backlogged UE (ascending ue_id, cyclic, starting after the last UE served).
:func:`allocate_slot` computes the same allocation in rounds instead of PRBs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .radio import Cell, Modulation, mcs_from_sinr


class SchedulingError(ValueError):
    pass


@dataclass(frozen=True)
class UeLink:
    """A UE as seen by one cell's scheduler."""

    ue_id: int
    serving_cell: int
    sinr_db: float


@dataclass
class Grant:
    prbs_granted: int = 0
    bits_served: float = 0.0
    tb_count: int = 0
    modulation: Modulation = Modulation.OUTAGE
    tb_by_modulation: dict[Modulation, int] = field(default_factory=dict)


def allocate_slot(n_prb: int, need: dict[int, int], last_served: int | None
                  ) -> tuple[dict[int, int], int | None]:
    """One slot of cyclic PRB-by-PRB round robin, computed round-wise.

    ``need`` maps ue_id -> PRBs that would clear its backlog (> 0). Returns
    the PRBs granted per UE and the id of the last UE that got a PRB.
    """
    if not need or n_prb <= 0:
        return {}, last_served
    ids = sorted(need)
    if last_served is not None:
        start = next((i for i, u in enumerate(ids) if u > last_served), 0)
        ids = ids[start:] + ids[:start]
    granted = dict.fromkeys(ids, 0)
    remaining = dict(need)
    active = ids
    left = n_prb
    last = last_served
    while left > 0 and active:
        m = len(active)
        rounds = min(remaining[u] for u in active)
        if rounds * m <= left:
            for u in active:
                granted[u] += rounds
                remaining[u] -= rounds
            left -= rounds * m
            last = active[-1]
            active = [u for u in active if remaining[u] > 0]
        else:
            full, extra = divmod(left, m)
            for u in active:
                granted[u] += full
            for u in active[:extra]:
                granted[u] += 1
            last = active[extra - 1] if extra else active[-1]
            left = 0
    return {u: g for u, g in granted.items() if g > 0}, last


class RoundRobinScheduler:
    """Per-cell scheduler state (the round-robin pointer)."""

    def __init__(self, cell: Cell, slot_ms: int = 1,
                 mcs_thresholds_db=(0.0, 10.0, 18.0), mcs_spectral_eff=(1.0, 2.4, 4.0)):
        self.cell = cell
        self.slot_ms = slot_ms
        self.mcs_thresholds_db = mcs_thresholds_db
        self.mcs_spectral_eff = mcs_spectral_eff
        self.last_served: int | None = None

    def schedule(self, attached_ues: list[UeLink], demand_bits: dict[int, float],
                 window_ms: int) -> dict[int, Grant]:
        if window_ms % self.slot_ms:
            raise SchedulingError(f"window {window_ms} ms is not a whole number of slots")
        slot_s = self.slot_ms / 1000.0
        grants: dict[int, Grant] = {}
        bits_per_prb: dict[int, float] = {}
        remaining: dict[int, float] = {}
        for ue in attached_ues:
            if ue.serving_cell != self.cell.cell_id:
                raise SchedulingError(
                    f"UE {ue.ue_id} is attached to cell {ue.serving_cell}, "
                    f"not {self.cell.cell_id}"
                )
            d = demand_bits.get(ue.ue_id, 0.0)
            if d < 0:
                raise SchedulingError(f"negative demand for UE {ue.ue_id}")
            mod, se = mcs_from_sinr(ue.sinr_db, self.mcs_thresholds_db, self.mcs_spectral_eff)
            grants[ue.ue_id] = Grant(modulation=mod)
            bits_per_prb[ue.ue_id] = self.cell.bandwidth_hz / self.cell.n_prb * se * slot_s
            remaining[ue.ue_id] = d
        for _ in range(window_ms // self.slot_ms):
            need = {}
            for u, r in remaining.items():
                if r >= 1 and bits_per_prb[u] > 0:
                    need[u] = math.ceil(r / bits_per_prb[u] - 1e-9)
            need = {u: n for u, n in need.items() if n > 0}
            if not need:
                break
            alloc, self.last_served = allocate_slot(self.cell.n_prb, need, self.last_served)
            for u, prbs in alloc.items():
                # transport blocks carry whole bits, which keeps the books exact
                bits = float(math.floor(min(remaining[u], prbs * bits_per_prb[u])))
                remaining[u] -= bits
                g = grants[u]
                g.prbs_granted += prbs
                g.bits_served += bits
                g.tb_count += 1
                g.tb_by_modulation[g.modulation] = g.tb_by_modulation.get(g.modulation, 0) + 1
        return grants


def schedule_cell(cell: Cell, attached_ues: list[UeLink], per_ue_demand_bits: dict[int, float],
                  window_ms: int, slot_ms: int = 1, last_served: int | None = None,
                  **mcs) -> dict[int, Grant]:
    """Stateless convenience wrapper around :class:`RoundRobinScheduler`."""
    sched = RoundRobinScheduler(cell, slot_ms, **mcs)
    sched.last_served = last_served
    return sched.schedule(attached_ues, per_ue_demand_bits, window_ms)
