"""Per-UE state records produced by the ETL stage, and their CSV layout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

CELL_FEATURES = (
    "sinr_db", "prb_util_pct", "active_ues", "tb_count",
    "share_qpsk", "share_16qam", "share_64qam", "ho_cost",
)


@dataclass
class CellFeatures:
    cell_id: int
    sinr_db: float
    prb_util_pct: float
    active_ues: float
    tb_count: float
    share_qpsk: float
    share_16qam: float
    share_64qam: float
    ho_cost: float

    def values(self) -> list[float]:
        return [getattr(self, f) for f in CELL_FEATURES]


@dataclass
class UeStateRecord:
    ue_id: int
    window_end_ms: int
    t_since_last_ho_ms: int
    serving_cell_id: int
    per_cell: list[CellFeatures]
    reward_throughput_bps: float
    filled_fields: int = field(default=0, compare=False)

    @property
    def cell_ids(self) -> list[int]:
        return [c.cell_id for c in self.per_cell]

    def is_finite(self) -> bool:
        vals = [v for c in self.per_cell for v in c.values()] + [self.reward_throughput_bps]
        return all(math.isfinite(v) for v in vals)


def record_columns(n_cells: int) -> list[str]:
    cols = ["window_end_ms", "ue_id", "serving_cell_id", "t_since_last_ho_ms",
            "reward_throughput_bps", "action_cell_id"]
    for i in range(n_cells):
        cols.append(f"c{i}_cell_id")
        cols.extend(f"c{i}_{f}" for f in CELL_FEATURES)
    return cols


def record_row(rec: UeStateRecord, action_cell_id: int) -> list:
    row: list = [rec.window_end_ms, rec.ue_id, rec.serving_cell_id, rec.t_since_last_ho_ms,
                 repr(float(rec.reward_throughput_bps)), action_cell_id]
    for c in rec.per_cell:
        row.append(c.cell_id)
        row.extend(repr(float(v)) for v in c.values())
    return row


def parse_record_row(row: dict[str, str]) -> tuple[UeStateRecord, int]:
    n = 0
    while f"c{n}_cell_id" in row:
        n += 1
    cells = [
        CellFeatures(int(row[f"c{i}_cell_id"]), *(float(row[f"c{i}_{f}"]) for f in CELL_FEATURES))
        for i in range(n)
    ]
    rec = UeStateRecord(
        ue_id=int(row["ue_id"]),
        window_end_ms=int(row["window_end_ms"]),
        t_since_last_ho_ms=int(row["t_since_last_ho_ms"]),
        serving_cell_id=int(row["serving_cell_id"]),
        per_cell=cells,
        reward_throughput_bps=float(row["reward_throughput_bps"]),
    )
    return rec, int(row["action_cell_id"])
