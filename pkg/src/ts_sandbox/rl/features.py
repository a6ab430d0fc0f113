"""State encoding and reward for the traffic-steering agent.

A state is 7 cell blocks of 8 features (ascending cell id) plus the time since
the UE's last handover. Every feature is mapped as ``(x - shift) / scale``
with fixed constants from a versioned manifest, so inference never depends on
training-set statistics. Scenarios with fewer NR cells are zero-padded.

The handover cost decays as exp(-delta * windows), which for a UE that has
been stable for a minute is around 1e-26 (and is 0 before its first
handover), so the serving cell would be invisible to the network. The cost of
every non-serving cell is therefore floored at ``ho_cost_floor`` before
scaling, leaving the serving block as the only one at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..ric.etl import DELTA, K0
from ..ric.records import CELL_FEATURES, UeStateRecord

N_CELLS = 7
N_CELL_FEATURES = len(CELL_FEATURES)
FEATURE_DIM = N_CELLS * N_CELL_FEATURES + 1
REWARD_FLOOR_BPS = 1000.0
BETA = 1.0


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class Normalization:
    """Per-feature ``(shift, scale)`` pairs plus the clip horizon of the extra input."""

    version: int
    cell: tuple[tuple[str, float, float], ...]
    extra_scale_ms: float
    ho_cost_floor: float = 0.05

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "cell": [list(c) for c in self.cell],
            "extra_scale_ms": self.extra_scale_ms,
            "ho_cost_floor": self.ho_cost_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        cell = tuple((str(n), float(a), float(b)) for n, a, b in d["cell"])
        if tuple(n for n, _, _ in cell) != CELL_FEATURES:
            raise FeatureError(f"manifest feature order {[c[0] for c in cell]} != {CELL_FEATURES}")
        return cls(int(d["version"]), cell, float(d["extra_scale_ms"]),
                   float(d["ho_cost_floor"]))

    @property
    def shift(self) -> np.ndarray:
        return np.array([c[1] for c in self.cell])

    @property
    def scale(self) -> np.ndarray:
        return np.array([c[2] for c in self.cell])


DEFAULT_NORMS = Normalization(
    version=1,
    cell=(
        ("sinr_db", -20.0, 60.0),
        ("prb_util_pct", 0.0, 100.0),
        ("active_ues", 0.0, 50.0),
        ("tb_count", 0.0, 1000.0),
        ("share_qpsk", 0.0, 1.0),
        ("share_16qam", 0.0, 1.0),
        ("share_64qam", 0.0, 1.0),
        ("ho_cost", 0.0, 1.0),
    ),
    extra_scale_ms=10_000.0,
)


def encode_state(record: UeStateRecord, norms: Normalization = DEFAULT_NORMS,
                 n_cells: int = N_CELLS) -> np.ndarray:
    """Feature vector of length ``n_cells * 8 + 1``; raises on non-finite input."""
    if len(record.per_cell) > n_cells:
        raise FeatureError(f"record has {len(record.per_cell)} cells, encoder takes {n_cells}")
    ids = [c.cell_id for c in record.per_cell]
    if ids != sorted(ids):
        raise FeatureError("cell blocks must be in ascending cell id order")
    raw = np.array([c.values() for c in record.per_cell], dtype=float).reshape(-1, N_CELL_FEATURES)
    extra = float(record.t_since_last_ho_ms)
    if not (np.isfinite(raw).all() and math.isfinite(extra)):
        raise FeatureError(f"non-finite measurement in record of UE {record.ue_id}")
    other = np.array(ids) != record.serving_cell_id
    raw[:, -1] = np.where(other, np.maximum(raw[:, -1], norms.ho_cost_floor), raw[:, -1])
    out = np.zeros(n_cells * N_CELL_FEATURES + 1)
    blocks = (raw - norms.shift) / norms.scale
    out[: blocks.size] = blocks.ravel()
    out[-1] = min(max(extra, 0.0) / norms.extra_scale_ms, 1.0)
    return out


def compute_reward(r_prev_bps: float, r_next_bps: float, ho_executed: bool,
                   t_minus_tprime_ms: float, period_ms: float = 100.0, beta: float = BETA,
                   k0: float = K0, delta: float = DELTA,
                   floor_bps: float = REWARD_FLOOR_BPS) -> float:
    """Log-throughput gain minus the decaying handover cost when a handover is made."""
    if r_prev_bps < 0 or r_next_bps < 0:
        raise FeatureError("throughput must be non-negative")
    gain = beta * (math.log(max(r_next_bps, floor_bps)) - math.log(max(r_prev_bps, floor_bps)))
    if not ho_executed:
        return gain
    return gain - k0 * math.exp(-delta * t_minus_tprime_ms / period_ms)
