"""ETL: join per-node KPM reports into per-UE state records.

Missing measurements are filled from the most recent value received within
``epsilon_ms``; a record that still has a hole is dropped, never zero-filled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from ..sim.world import CellKpm, KpmReport
from .records import CellFeatures, UeStateRecord

K0 = 1.0
DELTA = 0.1


def ho_cost(t_since_last_ho_ms: float, period_ms: float, is_other_cell: bool,
            k0: float = K0, delta: float = DELTA) -> float:
    """K0 * exp(-delta * windows since the last handover) for any cell but the serving one."""
    if not is_other_cell:
        return 0.0
    return k0 * math.exp(-delta * t_since_last_ho_ms / period_ms)


@dataclass
class KpmHistory:
    """Latest finite value (and its window time) for every measurement key."""

    cell: dict[tuple[int, str], tuple[int, float]] = field(default_factory=dict)
    ue_sinr: dict[tuple[int, int], tuple[int, float]] = field(default_factory=dict)
    ue_thr: dict[int, tuple[int, float]] = field(default_factory=dict)
    ue_serving: dict[int, tuple[int, int]] = field(default_factory=dict)

    def ingest(self, report: KpmReport) -> None:
        t = report.window_end_ms
        c = report.cell_level
        for name in CellKpm.FIELDS:
            v = getattr(c, name)
            if math.isfinite(v):
                self.cell[(c.cell_id, name)] = (t, v)
        for u in report.ue_level:
            self.ue_serving[u.ue_id] = (t, report.node_id)
            if math.isfinite(u.pdcp_throughput_bps):
                self.ue_thr[u.ue_id] = (t, u.pdcp_throughput_bps)
            for cid, s in u.sinr_db_by_cell.items():
                if math.isfinite(s):
                    self.ue_sinr[(u.ue_id, cid)] = (t, s)

    @staticmethod
    def lookup(table: dict, key, now_ms: int, epsilon_ms: int):
        hit = table.get(key)
        if hit is None or now_ms - hit[0] > epsilon_ms or hit[0] > now_ms:
            return None
        return hit[1]

    def known_ues(self) -> set[int]:
        return set(self.ue_serving)


@dataclass
class EtlStats:
    records: int = 0
    dropped: int = 0
    filled_fields: int = 0


def aggregate_ue_record(
    kpm_window: Mapping[int, KpmReport],
    ue_id: int,
    history: KpmHistory,
    epsilon_ms: int,
    *,
    window_end_ms: int,
    nr_cell_ids: list[int],
    last_ho_ms: int | None = None,
    period_ms: int = 100,
    k0: float = K0,
    delta: float = DELTA,
    stats: EtlStats | None = None,
) -> UeStateRecord | None:
    """Build the state record of ``ue_id`` for one window, or ``None`` if incomplete.

    ``history`` must hold earlier windows only; it is not modified here. A UE
    with no handover yet (``last_ho_ms`` None) reports the time since start and
    carries no handover cost: the initial attach is not a handover.
    """
    stats = stats if stats is not None else EtlStats()
    t = window_end_ms
    filled = 0

    entry, serving = None, None
    for node_id, rep in kpm_window.items():
        for u in rep.ue_level:
            if u.ue_id == ue_id:
                entry, serving = u, node_id
                break
        if entry is not None:
            break
    if serving is None:
        serving = history.lookup(history.ue_serving, ue_id, t, epsilon_ms)
        filled += 1
    if serving is None:
        stats.dropped += 1
        return None

    def fill(present: float | None, table: dict, key) -> float | None:
        nonlocal filled
        if present is not None and math.isfinite(present):
            return present
        filled += 1
        return history.lookup(table, key, t, epsilon_ms)

    thr = fill(entry.pdcp_throughput_bps if entry else None, history.ue_thr, ue_id)
    t_since = max(0, t - (last_ho_ms or 0))
    k_scale = 0.0 if last_ho_ms is None else k0
    cells = []
    for cid in sorted(nr_cell_ids):
        sinr_now = entry.sinr_db_by_cell.get(cid) if entry else None
        sinr = fill(sinr_now, history.ue_sinr, (ue_id, cid))
        rep = kpm_window.get(cid)
        vals = []
        for name in CellKpm.FIELDS:
            now = getattr(rep.cell_level, name) if rep is not None else None
            vals.append(fill(now, history.cell, (cid, name)))
        if sinr is None or any(v is None for v in vals):
            stats.dropped += 1
            return None
        cells.append(CellFeatures(cid, sinr, *vals,
                                  ho_cost(t_since, period_ms, cid != serving, k_scale, delta)))
    if thr is None:
        stats.dropped += 1
        return None
    stats.records += 1
    stats.filled_fields += filled
    return UeStateRecord(ue_id, t, t_since, serving, cells, thr, filled)
