"""Offline transitions: building them from state records, binary/CSV I/O, replay.

``transitions.bin`` is a headerless array of packed little-endian records::

    ue_id u32 | s 57 x f32 | a u8 | r f32 | s' 57 x f32 | done u8     (466 bytes)
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..ric.records import UeStateRecord
from .features import DEFAULT_NORMS, FEATURE_DIM, N_CELLS, Normalization, compute_reward, encode_state
from .losses import Batch

TRANSITION_DTYPE = np.dtype([
    ("ue_id", "<u4"),
    ("s", "<f4", (FEATURE_DIM,)),
    ("a", "u1"),
    ("r", "<f4"),
    ("s2", "<f4", (FEATURE_DIM,)),
    ("done", "u1"),
])
assert TRANSITION_DTYPE.itemsize == 466


class DatasetError(ValueError):
    pass


def empty(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=TRANSITION_DTYPE)


def build_transitions(records: Iterable[tuple[UeStateRecord, int]], period_ms: int = 100,
                      norms: Normalization = DEFAULT_NORMS) -> np.ndarray:
    """Pair each UE's record with its record one report window later.

    The action is the cell chosen at the first record, as an index into that
    record's ascending cell list; the reward is the log-throughput change to
    the next record minus the handover cost if the action left the serving cell.
    """
    by_ue: dict[int, list[tuple[UeStateRecord, int]]] = defaultdict(list)
    for rec, action_cell in records:
        by_ue[rec.ue_id].append((rec, action_cell))
    rows = []
    for ue_id in sorted(by_ue):
        seq = sorted(by_ue[ue_id], key=lambda x: x[0].window_end_ms)
        for (rec, act), (nxt, _) in zip(seq, seq[1:]):
            if nxt.window_end_ms - rec.window_end_ms != period_ms:
                continue
            ids = rec.cell_ids
            if act not in ids:
                raise DatasetError(f"action cell {act} not in record cells {ids}")
            if len(ids) > N_CELLS:
                raise DatasetError(f"records with {len(ids)} cells exceed the encoder width")
            ho = act != rec.serving_cell_id
            # a zero cost on the target block means no earlier handover to decay from
            dt = rec.t_since_last_ho_ms if rec.per_cell[ids.index(act)].ho_cost > 0 else math.inf
            r = compute_reward(rec.reward_throughput_bps, nxt.reward_throughput_bps, ho,
                               dt, period_ms)
            rows.append((ue_id, encode_state(rec, norms), ids.index(act), r,
                         encode_state(nxt, norms), 0))
    out = empty(len(rows))
    for i, row in enumerate(rows):
        out[i] = row
    return out


def write_bin(path: Path | str, data: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(data, dtype=TRANSITION_DTYPE).tobytes())
    return path


def read_bin(path: Path | str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) % TRANSITION_DTYPE.itemsize:
        raise DatasetError(f"{path}: size {len(raw)} is not a multiple of "
                           f"{TRANSITION_DTYPE.itemsize}-byte records")
    data = np.frombuffer(raw, dtype=TRANSITION_DTYPE).copy()
    validate(data, str(path))
    return data


def validate(data: np.ndarray, where: str = "dataset") -> None:
    if len(data) == 0:
        raise DatasetError(f"{where}: no transitions")
    if (data["a"] >= N_CELLS).any():
        raise DatasetError(f"{where}: action index out of range")
    for f in ("s", "r", "s2"):
        if not np.isfinite(data[f]).all():
            raise DatasetError(f"{where}: non-finite values in field {f!r}")


def csv_columns() -> list[str]:
    return (["ue_id"] + [f"s{i}" for i in range(FEATURE_DIM)] + ["a", "r"]
            + [f"s2_{i}" for i in range(FEATURE_DIM)] + ["done"])


def write_csv_mirror(path: Path | str, data: np.ndarray) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns())
        for t in data:
            w.writerow([int(t["ue_id"]), *(repr(float(v)) for v in t["s"]), int(t["a"]),
                        repr(float(t["r"])), *(repr(float(v)) for v in t["s2"]), int(t["done"])])
    return path


def read_csv_mirror(path: Path | str) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = empty(len(rows))
    for i, r in enumerate(rows):
        out[i] = (int(r["ue_id"]), [float(r[f"s{k}"]) for k in range(FEATURE_DIM)], int(r["a"]),
                  float(r["r"]), [float(r[f"s2_{k}"]) for k in range(FEATURE_DIM)], int(r["done"]))
    return out


def concat(parts: Sequence[np.ndarray]) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Concatenate datasets; also return each part's ``[start, stop)`` row range."""
    ranges, start = [], 0
    for p in parts:
        ranges.append((start, start + len(p)))
        start += len(p)
    return (np.concatenate(parts) if parts else empty()), ranges


class ReplayBuffer:
    """Circular buffer of float64 transitions with uniform sampling."""

    def __init__(self, capacity: int, n_in: int = FEATURE_DIM):
        if capacity <= 0:
            raise DatasetError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, n_in))
        self.s2 = np.zeros((capacity, n_in))
        self.a = np.zeros(capacity, dtype=np.intp)
        self.r = np.zeros(capacity)
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, a: int, r: float, s2, done: bool = False) -> None:
        i = self._next
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, done
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def extend(self, data: np.ndarray) -> None:
        for t in data:
            self.add(t["s"], int(t["a"]), float(t["r"]), t["s2"], bool(t["done"]))

    @classmethod
    def from_arrays(cls, s, a, r, s2, done=None, capacity: int | None = None) -> "ReplayBuffer":
        s = np.asarray(s, dtype=float)
        buf = cls(capacity or len(s), s.shape[1])
        done = np.zeros(len(s), dtype=bool) if done is None else done
        for row in zip(s, a, r, np.asarray(s2, dtype=float), done):
            buf.add(*row)
        return buf

    def batch(self, idx: np.ndarray) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])

    def sample(self, rng: np.random.Generator, batch_size: int) -> Batch:
        if self.size == 0:
            raise DatasetError("cannot sample from an empty buffer")
        return self.batch(rng.integers(self.size, size=batch_size))
