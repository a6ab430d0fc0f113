"""Adam with bias correction over a flat parameter vector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    _buf: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)


def adam_step(theta: np.ndarray, grad: np.ndarray, lr: float, state: AdamState) -> np.ndarray:
    """Update ``theta`` in place and return it.

    ``m_hat / (sqrt(v_hat) + eps)`` is evaluated with the bias corrections folded
    into the step size. A non-finite gradient raises and leaves all state untouched.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if not np.isfinite(grad).all():
        raise NonFiniteGradient(f"non-finite gradient at Adam step {state.t + 1}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    if state._buf is None or state._buf.shape != theta.shape:
        state._buf = np.empty_like(theta)
    buf = state._buf
    m *= b1
    np.multiply(grad, 1.0 - b1, out=buf)
    m += buf
    v *= b2
    np.multiply(grad, grad, out=buf)
    buf *= 1.0 - b2
    v += buf
    c1 = 1.0 - b1 ** state.t
    c2 = math.sqrt(1.0 - b2 ** state.t)
    # m_hat / (sqrt(v_hat) + eps) == (m / c1) / (sqrt(v) / c2 + eps)
    np.sqrt(v, out=buf)
    buf /= c2
    buf += state.eps
    np.divide(m, buf, out=buf)
    buf *= lr / c1
    theta -= buf
    return theta
