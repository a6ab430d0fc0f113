"""Handover policies: the RRM/SON1/SON2 heuristics and the shared interface.

Every policy maps a :class:`UeStateRecord` to a target NR cell; returning the
serving cell is the no-handover action.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .ric.records import UeStateRecord

THRESHOLD_DB = 3.0
SON1_TTT_MS = 110.0
SON2_TTT_BASE_MS = 110.0
SON2_SLOPE_MS_PER_DB = 10.0
SON2_TTT_MIN_MS = 20.0


class Reason(str, enum.Enum):
    THRESHOLD = "Threshold"
    TTT_EXPIRED = "TttExpired"
    RL_GREEDY = "RlGreedy"
    NOOP = "NoOp"
    EXPLORE = "Explore"


@dataclass(frozen=True)
class PolicyDecision:
    ue_id: int
    target_cell_id: int
    reason: Reason

    @property
    def is_handover(self) -> bool:
        return self.reason is not Reason.NOOP


class Policy(Protocol):
    name: str

    def decide(self, record: UeStateRecord) -> PolicyDecision: ...


class PolicyError(ValueError):
    pass


def _sinr_by_cell(record: UeStateRecord) -> dict[int, float]:
    return {c.cell_id: c.sinr_db for c in record.per_cell}


def _noop(record: UeStateRecord) -> PolicyDecision:
    return PolicyDecision(record.ue_id, record.serving_cell_id, Reason.NOOP)


def _margins(record: UeStateRecord, threshold_db: float) -> dict[int, float]:
    """Neighbours whose SINR exceeds serving + threshold (strictly), with their margin."""
    sinr = _sinr_by_cell(record)
    serving = sinr[record.serving_cell_id]
    return {c: s - serving for c, s in sinr.items()
            if c != record.serving_cell_id and s - serving > threshold_db}


def _best(cands: dict[int, float]) -> int:
    # highest margin, ties to the lowest cell id
    return min(cands, key=lambda c: (-cands[c], c))


def rrm_decide(record: UeStateRecord, threshold_db: float = THRESHOLD_DB) -> PolicyDecision:
    above = _margins(record, threshold_db)
    if not above:
        return _noop(record)
    return PolicyDecision(record.ue_id, _best(above), Reason.THRESHOLD)


@dataclass
class TttTracker:
    """When each (ue, candidate) pair first exceeded the threshold, continuously."""

    since_ms: dict[tuple[int, int], float] = field(default_factory=dict)
    serving: dict[int, int] = field(default_factory=dict)

    def sync_serving(self, ue_id: int, serving: int) -> None:
        if self.serving.get(ue_id, serving) != serving:
            self.clear(ue_id)
        self.serving[ue_id] = serving

    def update(self, ue_id: int, above: dict[int, float], now_ms: float) -> None:
        for key in [k for k in self.since_ms if k[0] == ue_id and k[1] not in above]:
            del self.since_ms[key]
        for c in above:
            self.since_ms.setdefault((ue_id, c), now_ms)

    def elapsed(self, ue_id: int, cell_id: int, now_ms: float) -> float:
        return now_ms - self.since_ms[(ue_id, cell_id)]

    def clear(self, ue_id: int) -> None:
        for key in [k for k in self.since_ms if k[0] == ue_id]:
            del self.since_ms[key]

    def is_empty(self, ue_id: int | None = None) -> bool:
        return not any(ue_id is None or k[0] == ue_id for k in self.since_ms)


def son2_ttt_ms(margin_db: float, threshold_db: float = THRESHOLD_DB,
                base_ms: float = SON2_TTT_BASE_MS, slope_ms_per_db: float = SON2_SLOPE_MS_PER_DB,
                min_ms: float = SON2_TTT_MIN_MS) -> float:
    """Dynamic TTT, shortened linearly with the margin beyond the threshold."""
    return max(min_ms, base_ms - slope_ms_per_db * (margin_db - threshold_db))


def _ttt_decide(record: UeStateRecord, tracker: TttTracker, now_ms: float, ttt_of,
                threshold_db: float) -> PolicyDecision:
    tracker.sync_serving(record.ue_id, record.serving_cell_id)
    above = _margins(record, threshold_db)
    tracker.update(record.ue_id, above, now_ms)
    ready = {c: m for c, m in above.items()
             if tracker.elapsed(record.ue_id, c, now_ms) >= ttt_of(m)}
    if not ready:
        return _noop(record)
    target = _best(ready)
    tracker.clear(record.ue_id)
    tracker.serving[record.ue_id] = target
    return PolicyDecision(record.ue_id, target, Reason.TTT_EXPIRED)


def son1_decide(record: UeStateRecord, tracker: TttTracker, now_ms: float,
                ttt_ms: float = SON1_TTT_MS, threshold_db: float = THRESHOLD_DB) -> PolicyDecision:
    return _ttt_decide(record, tracker, now_ms, lambda m: ttt_ms, threshold_db)


def son2_decide(record: UeStateRecord, tracker: TttTracker, now_ms: float,
                threshold_db: float = THRESHOLD_DB, base_ms: float = SON2_TTT_BASE_MS,
                slope_ms_per_db: float = SON2_SLOPE_MS_PER_DB,
                min_ms: float = SON2_TTT_MIN_MS) -> PolicyDecision:
    return _ttt_decide(
        record, tracker, now_ms,
        lambda m: son2_ttt_ms(m, threshold_db, base_ms, slope_ms_per_db, min_ms),
        threshold_db,
    )


class RrmPolicy:
    name = "rrm"

    def __init__(self, threshold_db: float = THRESHOLD_DB):
        self.threshold_db = threshold_db

    def decide(self, record: UeStateRecord) -> PolicyDecision:
        return rrm_decide(record, self.threshold_db)


class Son1Policy:
    name = "son1"

    def __init__(self, ttt_ms: float = SON1_TTT_MS, threshold_db: float = THRESHOLD_DB):
        self.ttt_ms = ttt_ms
        self.threshold_db = threshold_db
        self.tracker = TttTracker()

    def decide(self, record: UeStateRecord) -> PolicyDecision:
        return son1_decide(record, self.tracker, record.window_end_ms, self.ttt_ms,
                           self.threshold_db)


class Son2Policy:
    name = "son2"

    def __init__(self, threshold_db: float = THRESHOLD_DB, base_ms: float = SON2_TTT_BASE_MS,
                 slope_ms_per_db: float = SON2_SLOPE_MS_PER_DB, min_ms: float = SON2_TTT_MIN_MS):
        self.params = (threshold_db, base_ms, slope_ms_per_db, min_ms)
        self.tracker = TttTracker()

    def decide(self, record: UeStateRecord) -> PolicyDecision:
        return son2_decide(record, self.tracker, record.window_end_ms, *self.params)


class ExplorePolicy:
    """Behaviour policy for data collection: a base policy plus uniform random targets."""

    def __init__(self, base: Policy, epsilon: float, seed: int = 0):
        if not 0.0 <= epsilon <= 1.0:
            raise PolicyError(f"epsilon must be in [0, 1], got {epsilon}")
        self.base = base
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.name = f"explore:{epsilon}:{base.name}"

    def decide(self, record: UeStateRecord) -> PolicyDecision:
        decision = self.base.decide(record)
        if self.rng.random() < self.epsilon:
            target = record.cell_ids[int(self.rng.integers(len(record.per_cell)))]
            if target == record.serving_cell_id:
                return _noop(record)
            return PolicyDecision(record.ue_id, target, Reason.EXPLORE)
        return decision


def resolve_policy(spec: str, seed: int = 0) -> Policy:
    """Build a policy from ``rrm | son1 | son2 | rl:<model> | explore:<eps>:<base>``."""
    spec = spec.strip()
    if spec == "rrm":
        return RrmPolicy()
    if spec == "son1":
        return Son1Policy()
    if spec == "son2":
        return Son2Policy()
    if spec.startswith("rl:"):
        from .rl.agent import RlPolicy

        return RlPolicy.load(spec[3:])
    if spec.startswith("explore:"):
        parts = spec.split(":", 2)
        if len(parts) != 3:
            raise PolicyError(f"expected explore:<eps>:<base>, got {spec!r}")
        try:
            eps = float(parts[1])
        except ValueError:
            raise PolicyError(f"bad epsilon in {spec!r}") from None
        return ExplorePolicy(resolve_policy(parts[2], seed), eps, seed)
    raise PolicyError(f"unknown policy {spec!r}; expected rrm, son1, son2, rl:<path> "
                      "or explore:<eps>:<base>")
