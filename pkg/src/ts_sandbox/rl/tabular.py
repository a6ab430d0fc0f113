"""Tabular Bellman optimality iteration, the reference for small test MDPs."""

from __future__ import annotations

import numpy as np


def bellman_backup(q: np.ndarray, p: np.ndarray, r: np.ndarray, gamma: float) -> np.ndarray:
    """One sweep ``Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a')``.

    ``p`` has shape (S, A, S) and ``r`` shape (S, A).
    """
    return r + gamma * p @ q.max(axis=1)


def value_iteration(p: np.ndarray, r: np.ndarray, gamma: float, sweeps: int = 1000,
                    q0: np.ndarray | None = None) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    r = np.asarray(r, dtype=float)
    if p.shape != r.shape + (r.shape[0],):
        raise ValueError(f"transition shape {p.shape} does not match rewards {r.shape}")
    if not np.allclose(p.sum(axis=2), 1.0):
        raise ValueError("transition rows must sum to 1")
    q = np.zeros_like(r) if q0 is None else np.array(q0, dtype=float)
    for _ in range(sweeps):
        q = bellman_backup(q, p, r, gamma)
    return q


def greedy_policy(q: np.ndarray) -> np.ndarray:
    return np.argmax(q, axis=1)
