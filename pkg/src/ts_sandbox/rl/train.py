"""Offline Q-learning with REM heads and a conservative penalty, plus model files.

Model file layout (little-endian)::

    b"TSQ1" | u32 header length | UTF-8 JSON header | theta | target | adam m | adam v

where the four arrays are float64 vectors of ``header["n_params"]`` entries.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import struct
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .adam import AdamState, NonFiniteGradient, adam_step
from .dataset import DatasetError, ReplayBuffer, read_bin, validate
from .features import DEFAULT_NORMS, Normalization
from .losses import rem_cql_loss, sample_alpha
from .network import NetShape, FULL_SHAPE, init_params

log = logging.getLogger("ts_sandbox.rl")

MODEL_MAGIC = b"TSQ1"
MODEL_FORMAT = 1
LOSS_COLUMNS = ("step", "td_loss", "cql_term", "total")


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Hyper:
    steps: int = 100_000
    batch_size: int = 32
    gamma: float = 0.99
    lr: float = 5e-5
    target_update_period: int = 8000
    min_replay_history: int = 20_000
    replay_capacity: int = 1_000_000
    cql_alpha: float = 1.0
    omega: float = 1.0
    cql_variant: str = "greedy"
    seed: int = 0
    log_every: int = 100

    def replace(self, **kw) -> "Hyper":
        return replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


# full schedule: 400 iterations of 100k steps
FULL_HYPER = Hyper(steps=40_000_000)
# desk scale: same network, shorter run, faster optimiser and target sync
DESK_HYPER = Hyper(steps=200_000, lr=3e-4, target_update_period=2000, min_replay_history=2000,
                   replay_capacity=1_000_000, log_every=500)


@dataclass
class QModel:
    shape: NetShape
    theta: np.ndarray
    target: np.ndarray
    adam: AdamState
    norms: Normalization = DEFAULT_NORMS
    hyper: Hyper = field(default_factory=Hyper)

    @classmethod
    def initial(cls, shape: NetShape, hyper: Hyper, norms: Normalization = DEFAULT_NORMS
                ) -> "QModel":
        theta = init_params(shape, np.random.default_rng(hyper.seed))
        return cls(shape, theta, theta.copy(), AdamState.zeros(shape.n_params), norms, hyper)

    def to_bytes(self) -> bytes:
        header = json.dumps({
            "format": MODEL_FORMAT,
            "shape": self.shape.to_dict(),
            "n_params": self.shape.n_params,
            "norms": self.norms.to_dict(),
            "hyper": asdict(self.hyper),
            "adam_t": self.adam.t,
        }, sort_keys=True).encode()
        parts = [MODEL_MAGIC, struct.pack("<I", len(header)), header]
        parts += [np.asarray(a, dtype="<f8").tobytes()
                  for a in (self.theta, self.target, self.adam.m, self.adam.v)]
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "QModel":
        if raw[:4] != MODEL_MAGIC:
            raise ModelFormatError("not a TSQ1 model file")
        if len(raw) < 8:
            raise ModelFormatError("truncated model header")
        (hlen,) = struct.unpack_from("<I", raw, 4)
        try:
            header = json.loads(raw[8: 8 + hlen])
        except ValueError as exc:
            raise ModelFormatError(f"corrupt model header: {exc}") from None
        if header.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"unsupported model format {header.get('format')}")
        shape = NetShape(**header["shape"])
        n = shape.n_params
        body = raw[8 + hlen:]
        if len(body) != 4 * 8 * n:
            raise ModelFormatError(f"model body has {len(body)} bytes, expected {32 * n}")
        arrs = [np.frombuffer(body, dtype="<f8", count=n, offset=8 * n * i).astype(float)
                for i in range(4)]
        adam = AdamState(arrs[2], arrs[3], int(header["adam_t"]))
        return cls(shape, arrs[0], arrs[1], adam, Normalization.from_dict(header["norms"]),
                   Hyper.from_dict(header["hyper"]))

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Path | str) -> "QModel":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass
class TrainReport:
    steps: int
    dataset_size: int
    loss_rows: list[tuple[int, float, float, float]]
    elapsed_s: float
    model_path: str | None = None
    loss_csv: str | None = None

    def window_means(self, frac: float = 0.1) -> tuple[float, float]:
        """Mean total loss over the first and the last ``frac`` of logged rows."""
        rows = self.loss_rows
        if not rows:
            raise TrainingError("no loss rows logged")
        k = max(1, int(len(rows) * frac))
        first = sum(r[3] for r in rows[:k]) / k
        last = sum(r[3] for r in rows[-k:]) / k
        return first, last

    def to_dict(self) -> dict:
        d = {"steps": self.steps, "dataset_size": self.dataset_size,
             "elapsed_s": round(self.elapsed_s, 3), "model_path": self.model_path,
             "loss_csv": self.loss_csv}
        if self.loss_rows:
            first, last = self.window_means()
            d.update(first_window_loss=first, last_window_loss=last)
        return d


def load_buffer(dataset, hyper: Hyper, n_in: int | None = None) -> ReplayBuffer:
    if isinstance(dataset, ReplayBuffer):
        return dataset
    if isinstance(dataset, (str, Path)):
        dataset = read_bin(dataset)
    else:
        validate(dataset)
    data = dataset[-hyper.replay_capacity:]
    s = data["s"].astype(float)
    s2 = data["s2"].astype(float)
    if n_in is not None and s.shape[1] != n_in:
        raise DatasetError(f"dataset feature width {s.shape[1]} != network input {n_in}")
    return ReplayBuffer.from_arrays(s, data["a"].astype(np.intp), data["r"].astype(float), s2,
                                    data["done"].astype(bool), capacity=hyper.replay_capacity)


def write_loss_csv(path: Path | str, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for step, td, cql, tot in rows:
            w.writerow([step, repr(td), repr(cql), repr(tot)])
    return path


def train_offline(dataset, hyper: Hyper = DESK_HYPER, out_model_path: Path | str | None = None,
                  *, shape: NetShape = FULL_SHAPE, loss_csv: Path | str | None = None,
                  model: QModel | None = None, on_step=None) -> tuple[QModel, TrainReport]:
    """Train from a dataset (path, structured array or :class:`ReplayBuffer`).

    Each step samples a batch uniformly, draws fresh head weights on the simplex,
    and takes one Adam step on ``cql_alpha * penalty + omega * td``. The target
    network is synced every ``target_update_period`` steps. ``on_step(step, model,
    result)`` is called after each update when given.
    """
    t0 = time.perf_counter()
    model = model or QModel.initial(shape, hyper)
    shape = model.shape
    buf = load_buffer(dataset, hyper, shape.n_in)
    if len(buf) < hyper.min_replay_history:
        raise TrainingError(f"dataset has {len(buf)} transitions; minimum replay history is "
                            f"{hyper.min_replay_history}")
    rng = np.random.default_rng(np.random.SeedSequence([hyper.seed, 1]))
    rows: list[tuple[int, float, float, float]] = []
    acc = np.zeros(3)
    n_acc = 0
    for step in range(1, hyper.steps + 1):
        batch = buf.sample(rng, hyper.batch_size)
        alpha = sample_alpha(rng, shape.n_heads)
        res = rem_cql_loss(shape, model.theta, model.target, batch, alpha, hyper.gamma,
                           hyper.cql_alpha, hyper.omega, hyper.cql_variant)
        if not math.isfinite(res.total):
            raise TrainingError(
                f"non-finite loss at step {step}: td={res.td_loss} cql={res.cql_term} "
                f"|theta|={np.linalg.norm(model.theta):.3g}")
        try:
            adam_step(model.theta, res.grad, hyper.lr, model.adam)
        except NonFiniteGradient as exc:
            raise TrainingError(f"{exc}; td={res.td_loss} cql={res.cql_term}") from None
        if step % hyper.target_update_period == 0:
            model.target[:] = model.theta
        acc += (res.td_loss, res.cql_term, res.total)
        n_acc += 1
        if step % hyper.log_every == 0 or step == hyper.steps:
            m = acc / n_acc
            rows.append((step, float(m[0]), float(m[1]), float(m[2])))
            acc[:] = 0
            n_acc = 0
        if on_step is not None:
            on_step(step, model, res)
        if step % 10_000 == 0:
            log.info(json.dumps({"event": "train_progress", "step": step,
                                 "loss": rows[-1][3] if rows else None}))
    report = TrainReport(hyper.steps, len(buf), rows, time.perf_counter() - t0)
    if out_model_path is not None:
        report.model_path = str(model.save(out_model_path))
    if loss_csv is not None:
        report.loss_csv = str(write_loss_csv(loss_csv, rows))
    return model, report
