"""Multi-head Q-network with hand-written forward and backward passes.

Architecture: a 1-D convolution whose kernel and stride both equal the number
of per-cell features (one position per cell), ReLU, position-major flatten,
concatenation of the extra input, two ReLU dense layers and a linear output
layer reshaped to ``(heads, actions)``. All math is float64 numpy.

Parameters live in one flat vector; :func:`unpack` gives named views into it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import cached_property

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NetShape:
    n_cells: int = 7
    n_feat: int = 8
    n_filters: int = 32
    hidden1: int = 128
    hidden2: int = 32
    n_heads: int = 200
    n_actions: int = 7

    @property
    def n_in(self) -> int:
        return self.n_cells * self.n_feat + 1

    @property
    def conv_out(self) -> int:
        return self.n_cells * self.n_filters

    @property
    def flat(self) -> int:
        return self.conv_out + 1

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        return [
            ("conv_w", (self.n_filters, self.n_feat)),
            ("conv_b", (self.n_filters,)),
            ("w1", (self.flat, self.hidden1)),
            ("b1", (self.hidden1,)),
            ("w2", (self.hidden1, self.hidden2)),
            ("b2", (self.hidden2,)),
            ("w3", (self.hidden2, self.n_heads * self.n_actions)),
            ("b3", (self.n_heads * self.n_actions,)),
        ]

    @cached_property
    def slots(self) -> tuple[tuple[str, int, int, tuple[int, ...]], ...]:
        out, off = [], 0
        for name, s in self.layout():
            n = int(np.prod(s))
            out.append((name, off, off + n, s))
            off += n
        return tuple(out)

    @property
    def n_params(self) -> int:
        return self.slots[-1][2]

    def to_dict(self) -> dict:
        return asdict(self)


FULL_SHAPE = NetShape()


def unpack(shape: NetShape, theta: np.ndarray) -> dict[str, np.ndarray]:
    if theta.shape != (shape.n_params,):
        raise ShapeError(f"expected {shape.n_params} parameters, got {theta.shape}")
    return {name: theta[a:b].reshape(s) for name, a, b, s in shape.slots}


def init_params(shape: NetShape, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    theta = np.zeros(shape.n_params)
    p = unpack(shape, theta)
    fans = {
        "conv_w": (shape.n_feat, shape.n_filters),
        "w1": (shape.flat, shape.hidden1),
        "w2": (shape.hidden1, shape.hidden2),
        "w3": (shape.hidden2, shape.n_heads * shape.n_actions),
    }
    for name, (fan_in, fan_out) in fans.items():
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        p[name][...] = rng.uniform(-lim, lim, p[name].shape)
    return theta


# -- kernels --------------------------------------------------------------------

def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Single-channel valid convolution: x (B, L), w (F, K) -> (B, P, F)."""
    k = w.shape[1]
    patches = sliding_window_view(x, k, axis=1)[:, ::stride]
    return patches @ w.T + b


def conv1d_backward(x: np.ndarray, w: np.ndarray, stride: int, dout: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = w.shape[1]
    patches = sliding_window_view(x, k, axis=1)[:, ::stride]  # (B, P, K)
    f = w.shape[0]
    dw = dout.reshape(-1, f).T @ patches.reshape(-1, k)
    db = dout.sum(axis=(0, 1))
    dpatch = dout @ w  # (B, P, K)
    dx = np.zeros_like(x)
    for p in range(dout.shape[1]):
        dx[:, p * stride: p * stride + k] += dpatch[:, p]
    return dx, dw, db


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def dense_backward(x: np.ndarray, w: np.ndarray, dout: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def relu_backward(z: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (z > 0)


# -- network --------------------------------------------------------------------

@dataclass
class Trunk:
    """Activations up to the last hidden layer, kept for the backward pass."""

    x: np.ndarray
    conv_z: np.ndarray
    flat: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray


def _check_input(shape: NetShape, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != shape.n_in:
        raise ShapeError(f"expected input (*, {shape.n_in}), got {x.shape}")
    return x


def trunk_forward(shape: NetShape, theta: np.ndarray, x: np.ndarray) -> Trunk:
    x = _check_input(shape, x)
    p = unpack(shape, theta)
    cells = x[:, : shape.n_cells * shape.n_feat]
    conv_z = conv1d_forward(cells, p["conv_w"], p["conv_b"], shape.n_feat)
    flat = np.concatenate([relu_forward(conv_z).reshape(len(x), -1), x[:, -1:]], axis=1)
    z1 = dense_forward(flat, p["w1"], p["b1"])
    z2 = dense_forward(relu_forward(z1), p["w2"], p["b2"])
    return Trunk(x, conv_z, flat, z1, z2, relu_forward(z2))


def trunk_backward(shape: NetShape, theta: np.ndarray, t: Trunk, dh2: np.ndarray,
                   grad: np.ndarray) -> None:
    """Accumulate trunk gradients into the views of ``grad``."""
    p = unpack(shape, theta)
    g = unpack(shape, grad)
    dz2 = relu_backward(t.z2, dh2)
    dh1, dw2, db2 = dense_backward(relu_forward(t.z1), p["w2"], dz2)
    g["w2"] += dw2
    g["b2"] += db2
    dz1 = relu_backward(t.z1, dh1)
    dflat, dw1, db1 = dense_backward(t.flat, p["w1"], dz1)
    g["w1"] += dw1
    g["b1"] += db1
    dconv = relu_backward(t.conv_z, dflat[:, :-1].reshape(t.conv_z.shape))
    cells = t.x[:, : shape.n_cells * shape.n_feat]
    _, dcw, dcb = conv1d_backward(cells, p["conv_w"], shape.n_feat, dconv)
    g["conv_w"] += dcw
    g["conv_b"] += dcb


def forward(shape: NetShape, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-head Q-values, shape ``(B, heads, actions)`` (or ``(heads, actions)`` for 1-D x)."""
    single = np.asarray(x).ndim == 1
    t = trunk_forward(shape, theta, x)
    p = unpack(shape, theta)
    q = dense_forward(t.h2, p["w3"], p["b3"]).reshape(len(t.h2), shape.n_heads, shape.n_actions)
    return q[0] if single else q


def backward_heads(shape: NetShape, theta: np.ndarray, t: Trunk, dq: np.ndarray) -> np.ndarray:
    """Gradient of a loss given its derivative ``dq`` w.r.t. the ``(B, J, A)`` head outputs."""
    grad = np.zeros_like(theta)
    p = unpack(shape, theta)
    g = unpack(shape, grad)
    dflat = dq.reshape(len(dq), -1)
    dh2, dw3, db3 = dense_backward(t.h2, p["w3"], dflat)
    g["w3"] += dw3
    g["b3"] += db3
    trunk_backward(shape, theta, t, dh2, grad)
    return grad


def mixed_head(shape: NetShape, theta: np.ndarray, alpha: np.ndarray
               ) -> tuple[np.ndarray, np.ndarray]:
    """Output layer collapsed by the head weights: ``(hidden2, A)`` and ``(A,)``."""
    p = unpack(shape, theta)
    w3 = p["w3"].reshape(shape.hidden2, shape.n_heads, shape.n_actions)
    b3 = p["b3"].reshape(shape.n_heads, shape.n_actions)
    return np.matmul(alpha, w3), alpha @ b3


def combined_forward(shape: NetShape, theta: np.ndarray, x: np.ndarray, alpha: np.ndarray
                     ) -> tuple[np.ndarray, Trunk]:
    """Head-mixed Q-values ``(B, A)``; equal to ``einsum('bja,j', forward(x), alpha)``."""
    t = trunk_forward(shape, theta, x)
    w, b = mixed_head(shape, theta, alpha)
    return t.h2 @ w + b, t


def combined_backward(shape: NetShape, theta: np.ndarray, t: Trunk, dq: np.ndarray,
                      alpha: np.ndarray) -> np.ndarray:
    """Gradient given the derivative ``dq`` w.r.t. the ``(B, A)`` head-mixed Q-values."""
    grad = np.zeros_like(theta)
    p = unpack(shape, theta)
    g = unpack(shape, grad)
    w_mix, _ = mixed_head(shape, theta, alpha)
    gw = t.h2.T @ dq  # (hidden2, A)
    g["w3"][...] = (gw[:, None, :] * alpha[None, :, None]).reshape(g["w3"].shape)
    g["b3"][...] = np.outer(alpha, dq.sum(axis=0)).ravel()
    trunk_backward(shape, theta, t, dq @ w_mix.T, grad)
    return grad
