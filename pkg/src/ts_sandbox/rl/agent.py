"""Greedy online inference with a trained multi-head Q-network."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from ..policies import PolicyDecision, PolicyError, Reason
from ..ric.records import UeStateRecord
from .features import FeatureError, encode_state
from .losses import uniform_alpha
from .network import mixed_head, trunk_forward
from .train import ModelFormatError, QModel

log = logging.getLogger("ts_sandbox.rl")


def q_values(model: QModel, features: np.ndarray) -> np.ndarray:
    """Uniform average over heads of the Q-values, shape ``(A,)`` or ``(B, A)``."""
    w, b = mixed_head(model.shape, model.theta, uniform_alpha(model.shape.n_heads))
    q = trunk_forward(model.shape, model.theta, features).h2 @ w + b
    return q[0] if np.asarray(features).ndim == 1 else q


def greedy_action(q: np.ndarray, n_valid: int | None = None) -> int:
    """Index of the largest Q-value among the first ``n_valid``; ties go to the lowest index."""
    q = np.asarray(q)[: n_valid]
    return int(np.argmax(q))


def act_online(model: QModel, record: UeStateRecord) -> PolicyDecision:
    try:
        if not record.is_finite():
            raise FeatureError("non-finite record")
        x = encode_state(record, model.norms, model.shape.n_cells)
        a = greedy_action(q_values(model, x), len(record.per_cell))
        target = record.cell_ids[a]
    except (FeatureError, ValueError, IndexError) as exc:
        log.warning(json.dumps({"event": "rl_malformed_record", "ue_id": record.ue_id,
                                "error": repr(exc)}))
        return PolicyDecision(record.ue_id, record.serving_cell_id, Reason.NOOP)
    if target == record.serving_cell_id:
        return PolicyDecision(record.ue_id, target, Reason.NOOP)
    return PolicyDecision(record.ue_id, target, Reason.RL_GREEDY)


class RlPolicy:
    name = "rl"

    def __init__(self, model: QModel, name: str | None = None):
        self.model = model
        if name:
            self.name = name

    @classmethod
    def load(cls, path: str | Path) -> "RlPolicy":
        p = Path(path)
        if not p.is_file():
            raise PolicyError(f"model file {str(p)!r} not found")
        try:
            return cls(QModel.load(p), f"rl:{p.name}")
        except ModelFormatError as exc:
            raise PolicyError(f"cannot load model {str(p)!r}: {exc}") from None

    def decide(self, record: UeStateRecord) -> PolicyDecision:
        return act_online(self.model, record)
