"""REM temporal-difference loss, the conservative (CQL) penalty and plain DQN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    NetShape, backward_heads, combined_backward, combined_forward, forward, trunk_forward, unpack,
)

SIMPLEX_TOL = 1e-9


class LossError(ValueError):
    pass


@dataclass
class Batch:
    s: np.ndarray      # (B, n_in)
    a: np.ndarray      # (B,) action indices
    r: np.ndarray      # (B,)
    s2: np.ndarray     # (B, n_in)
    done: np.ndarray   # (B,) bool

    def __len__(self) -> int:
        return len(self.a)


@dataclass
class LossResult:
    td_loss: float
    cql_term: float
    total: float
    grad: np.ndarray
    targets: np.ndarray


def check_alpha(alpha: np.ndarray) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or (alpha < 0).any() or abs(alpha.sum() - 1.0) > SIMPLEX_TOL:
        raise LossError("alpha must be a probability vector")
    return alpha


def sample_alpha(rng: np.random.Generator, n_heads: int) -> np.ndarray:
    """Random point on the simplex from normalised independent uniforms."""
    u = rng.random(n_heads)
    while u.sum() == 0.0:  # pragma: no cover
        u = rng.random(n_heads)
    return u / u.sum()


def uniform_alpha(n_heads: int) -> np.ndarray:
    return np.full(n_heads, 1.0 / n_heads)


def rem_combine(q_heads: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Convex combination of head Q-values: ``(J, A)`` -> ``(A,)`` (leading batch dims allowed)."""
    alpha = check_alpha(alpha)
    q_heads = np.asarray(q_heads, dtype=float)
    if q_heads.shape[-2] != len(alpha):
        raise LossError(f"{q_heads.shape[-2]} heads but {len(alpha)} weights")
    return np.einsum("...ja,j->...a", q_heads, alpha)


def td_targets(shape: NetShape, target_theta: np.ndarray, batch: Batch, alpha: np.ndarray,
               gamma: float) -> np.ndarray:
    q_next, _ = combined_forward(shape, target_theta, batch.s2, alpha)
    return batch.r + gamma * (1.0 - batch.done.astype(float)) * q_next.max(axis=1)


def rem_cql_loss(shape: NetShape, theta: np.ndarray, target_theta: np.ndarray, batch: Batch,
                 alpha: np.ndarray, gamma: float, cql_alpha: float = 1.0, omega: float = 1.0,
                 variant: str = "greedy") -> LossResult:
    """``cql_alpha * penalty + omega * td`` on head-mixed Q-values, with its gradient.

    The penalty is the batch mean of ``max_a Q(s, a) - Q(s, a_data)``
    (``variant="greedy"``) or of ``logsumexp_a Q(s, a) - Q(s, a_data)``
    (``variant="logsumexp"``). Gradients flow into ``theta`` only.
    """
    alpha = check_alpha(alpha)
    n = len(batch)
    idx = np.arange(n)
    a = np.asarray(batch.a, dtype=np.intp)
    y = td_targets(shape, target_theta, batch, alpha, gamma)
    q, trunk = combined_forward(shape, theta, batch.s, alpha)
    q_sa = q[idx, a]
    err = q_sa - y
    td = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    np.add.at(dq, (idx, a), omega * 2.0 * err / n)

    if variant == "greedy":
        g = np.argmax(q, axis=1)
        term = float(np.mean(q[idx, g] - q_sa))
        np.add.at(dq, (idx, g), cql_alpha / n)
    elif variant == "logsumexp":
        m = q.max(axis=1, keepdims=True)
        e = np.exp(q - m)
        z = e.sum(axis=1, keepdims=True)
        term = float(np.mean(m[:, 0] + np.log(z[:, 0]) - q_sa))
        dq += cql_alpha * (e / z) / n
    else:
        raise LossError(f"unknown CQL variant {variant!r}")
    np.add.at(dq, (idx, a), -cql_alpha / n)

    grad = combined_backward(shape, theta, trunk, dq, alpha)
    return LossResult(td, term, omega * td + cql_alpha * term, grad, y)


def td_loss_rem(shape: NetShape, theta: np.ndarray, target_theta: np.ndarray, batch: Batch,
                alpha: np.ndarray, gamma: float) -> LossResult:
    return rem_cql_loss(shape, theta, target_theta, batch, alpha, gamma, cql_alpha=0.0)


def cql_regularizer(shape: NetShape, theta: np.ndarray, batch: Batch, alpha: np.ndarray,
                    cql_alpha: float = 1.0, variant: str = "greedy") -> LossResult:
    """The penalty alone (scaled by ``cql_alpha``); the TD part is switched off."""
    return rem_cql_loss(shape, theta, theta, batch, alpha, 0.0, cql_alpha=cql_alpha,
                        omega=0.0, variant=variant)


def dqn_loss(shape: NetShape, theta: np.ndarray, target_theta: np.ndarray, batch: Batch,
             gamma: float) -> LossResult:
    """Single-head DQN mean squared TD error, computed on the unmixed network outputs."""
    if shape.n_heads != 1:
        raise LossError("plain DQN loss needs a single-head network")
    n = len(batch)
    idx = np.arange(n)
    a = np.asarray(batch.a, dtype=np.intp)
    q_next = forward(shape, target_theta, np.atleast_2d(batch.s2))[:, 0, :]
    y = batch.r + gamma * (1.0 - batch.done.astype(float)) * q_next.max(axis=1)
    t = trunk_forward(shape, theta, batch.s)
    p = unpack(shape, theta)
    q = (t.h2 @ p["w3"] + p["b3"]).reshape(n, 1, shape.n_actions)
    err = q[idx, 0, a] - y
    dq = np.zeros_like(q)
    np.add.at(dq, (idx, 0, a), 2.0 * err / n)
    grad = backward_heads(shape, theta, t, dq)
    td = float(np.mean(err ** 2))
    return LossResult(td, 0.0, td, grad, y)
