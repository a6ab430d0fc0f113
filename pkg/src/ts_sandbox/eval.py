"""KPI computation and CSV export over run logs.

Inputs are the simulator's per-window logs:

* UE rows ``(window_end_ms, ue_id, serving_cell, bits_nr, bits_lte, serving_sinr_db)``
* cell rows ``(window_end_ms, cell_id, kind, prb_pct, bits, tb_count, active_ues)``
* events ``(time_ms, ue_id, kind, detail)``; only ``kind == "handover"`` counts.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger("ts_sandbox.eval")

UE_LOG_COLUMNS = ("window_end_ms", "ue_id", "serving_cell", "bits_nr", "bits_lte",
                  "serving_sinr_db")
CELL_LOG_COLUMNS = ("window_end_ms", "cell_id", "kind", "prb_pct", "bits", "tb_count",
                    "active_ues")
EVENT_COLUMNS = ("time_ms", "ue_id", "kind", "detail")
METRICS_COLUMNS = (
    "run_id", "policy", "seed", "band", "n_ues", "duration_s", "mean_thpt_bps",
    "p10_thpt_bps", "p95_thpt_bps", "mean_ue_se_bps_hz", "mean_cell_se_bps_hz",
    "mean_prb_pct", "ho_total", "mean_h_u",
)
PER_UE_COLUMNS = ("run_id", "ue_id", "mean_thpt_bps", "ho_count", "h_u", "se_bps_hz")
SINR_CDF_COLUMNS = ("sinr_db", "cdf")


class MetricsError(ValueError):
    pass


def mobility_overhead(ho_count: int, duration_s: float, mean_thpt_u: float,
                      mean_thpt_all: Sequence[float]) -> float:
    """Handovers per second weighted by the UE's share of total throughput."""
    if duration_s <= 0:
        raise MetricsError("duration must be positive")
    total = math.fsum(mean_thpt_all)
    if total <= 0:
        log.warning("zero total throughput; mobility overhead set to 0")
        return 0.0
    return (ho_count / duration_s) * (mean_thpt_u / total)


def spectral_efficiency(bits_served: float, bandwidth_hz: float, duration_s: float) -> float:
    if bandwidth_hz <= 0 or duration_s <= 0:
        raise MetricsError("bandwidth and duration must be positive")
    return bits_served / (bandwidth_hz * duration_s)


def percentile(samples: Iterable[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample (rank >= 1)."""
    xs = sorted(samples)
    if not xs:
        raise MetricsError("percentile of an empty sample")
    if not 0 <= p <= 100:
        raise MetricsError(f"p must be in [0, 100], got {p}")
    rank = max(1, math.ceil(p / 100.0 * len(xs)))
    return xs[rank - 1]


def sinr_cdf(samples: Iterable[float]) -> list[tuple[float, float]]:
    """Empirical CDF at each distinct sample value."""
    xs = sorted(samples)
    n = len(xs)
    out: list[tuple[float, float]] = []
    for i, x in enumerate(xs, start=1):
        if out and out[-1][0] == x:
            out[-1] = (x, i / n)
        else:
            out.append((x, i / n))
    return out


@dataclass
class UeMetrics:
    ue_id: int
    mean_thpt_bps: float
    ho_count: int
    h_u: float
    se_bps_hz: float


@dataclass
class RunMetrics:
    duration_s: float
    per_ue: list[UeMetrics]
    mean_thpt_bps: float
    p10_thpt_bps: float
    p95_thpt_bps: float
    mean_ue_se_bps_hz: float
    mean_cell_se_bps_hz: float
    mean_prb_pct: float
    sinr_samples: list[float] = field(repr=False, default_factory=list)
    run_id: str = ""
    policy: str = ""
    seed: int = 0
    band: str = ""

    @property
    def ho_total(self) -> int:
        return sum(u.ho_count for u in self.per_ue)

    @property
    def mean_h_u(self) -> float:
        return math.fsum(u.h_u for u in self.per_ue) / len(self.per_ue) if self.per_ue else 0.0

    def row(self) -> dict:
        d = {k: getattr(self, k) for k in METRICS_COLUMNS if k != "n_ues"}
        d["n_ues"] = len(self.per_ue)
        return {k: d[k] for k in METRICS_COLUMNS}


def handover_counts(events: Iterable[Sequence]) -> dict[int, int]:
    counts: dict[int, int] = defaultdict(int)
    for ev in events:
        if ev[2] == "handover":
            counts[int(ev[1])] += 1
    return counts


def accounting_gap(ue_log: Iterable[Sequence], cell_log: Iterable[Sequence]) -> float:
    """Served bits summed over UEs minus the same summed over cells (0 when books close)."""
    ue_bits = math.fsum(float(r[3]) + float(r[4]) for r in ue_log)
    cell_bits = math.fsum(float(r[4]) for r in cell_log)
    return ue_bits - cell_bits


def compute_metrics(ue_log: Sequence[Sequence], cell_log: Sequence[Sequence],
                    events: Iterable[Sequence], duration_s: float,
                    bandwidth_hz: dict[int, float], lte_cell_ids: Iterable[int] = (0,),
                    **labels) -> RunMetrics:
    """Aggregate one run.

    ``bandwidth_hz`` maps cell id to bandwidth. A UE's spectral efficiency sums
    its NR leg over the serving NR cell's bandwidth and its LTE leg over the
    anchor's, so per-UE values add up to the per-cell ones. Cell averages
    (spectral efficiency, PRB%) cover NR cells only.
    """
    if duration_s <= 0:
        raise MetricsError("duration must be positive")
    lte = set(lte_cell_ids)
    lte_bw = next((bandwidth_hz[c] for c in sorted(lte) if c in bandwidth_hz), None)
    bits: dict[int, float] = defaultdict(float)
    se_acc: dict[int, list[float]] = defaultdict(list)
    sinr = []
    for end_ms, ue_id, serving, b_nr, b_lte, s in ue_log:
        ue_id = int(ue_id)
        bits[ue_id] += float(b_nr) + float(b_lte)
        se_acc[ue_id].append(float(b_nr) / bandwidth_hz[int(serving)])
        if float(b_lte) and lte_bw:
            se_acc[ue_id].append(float(b_lte) / lte_bw)
        sinr.append(float(s))
    if not bits:
        raise MetricsError("empty UE log")
    ues = sorted(bits)
    thpt = {u: bits[u] / duration_s for u in ues}
    hos = handover_counts(events)
    all_thpt = [thpt[u] for u in ues]
    per_ue = [
        UeMetrics(u, thpt[u], hos.get(u, 0),
                  mobility_overhead(hos.get(u, 0), duration_s, thpt[u], all_thpt),
                  math.fsum(se_acc[u]) / duration_s)
        for u in ues
    ]

    cell_bits: dict[int, float] = defaultdict(float)
    prb: dict[int, list[float]] = defaultdict(list)
    for end_ms, cid, kind, prb_pct, b, tb, active in cell_log:
        cid = int(cid)
        if cid in lte:
            continue
        cell_bits[cid] += float(b)
        prb[cid].append(float(prb_pct))
    cell_se = [spectral_efficiency(cell_bits[c], bandwidth_hz[c], duration_s)
               for c in sorted(cell_bits)]
    prb_means = [math.fsum(v) / len(v) for _, v in sorted(prb.items())]

    return RunMetrics(
        duration_s=duration_s,
        per_ue=per_ue,
        mean_thpt_bps=math.fsum(all_thpt) / len(all_thpt),
        p10_thpt_bps=percentile(all_thpt, 10),
        p95_thpt_bps=percentile(all_thpt, 95),
        mean_ue_se_bps_hz=math.fsum(u.se_bps_hz for u in per_ue) / len(per_ue),
        mean_cell_se_bps_hz=math.fsum(cell_se) / len(cell_se) if cell_se else 0.0,
        mean_prb_pct=math.fsum(prb_means) / len(prb_means) if prb_means else 0.0,
        sinr_samples=sinr,
        **labels,
    )


# -- CSV I/O ---------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: Path | str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path: Path | str) -> list[dict[str, str]]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def export_metrics(m: RunMetrics, out_dir: Path | str) -> list[Path]:
    out = Path(out_dir)
    return [
        write_csv(out / "metrics.csv", METRICS_COLUMNS, [[m.row()[k] for k in METRICS_COLUMNS]]),
        write_csv(out / "per_ue.csv", PER_UE_COLUMNS,
                  [(m.run_id, u.ue_id, u.mean_thpt_bps, u.ho_count, u.h_u, u.se_bps_hz)
                   for u in m.per_ue]),
        write_csv(out / "sinr_cdf.csv", SINR_CDF_COLUMNS, sinr_cdf(m.sinr_samples)),
    ]


def load_logs(run_dir: Path | str) -> tuple[list[tuple], list[tuple], list[tuple]]:
    """Read ``ue_windows.csv``, ``cell_windows.csv`` and ``events.csv`` back as tuples."""
    run_dir = Path(run_dir)
    ue = [(int(r["window_end_ms"]), int(r["ue_id"]), int(r["serving_cell"]), float(r["bits_nr"]),
           float(r["bits_lte"]), float(r["serving_sinr_db"]))
          for r in read_csv(run_dir / "ue_windows.csv")]
    cell = [(int(r["window_end_ms"]), int(r["cell_id"]), r["kind"], float(r["prb_pct"]),
             float(r["bits"]), int(r["tb_count"]), int(r["active_ues"]))
            for r in read_csv(run_dir / "cell_windows.csv")]
    ev = [(int(r["time_ms"]), int(r["ue_id"]), r["kind"], r["detail"])
          for r in read_csv(run_dir / "events.csv")]
    return ue, cell, ev


COMPARE_METRICS = ("mean_thpt_bps", "p10_thpt_bps", "p95_thpt_bps", "mean_ue_se_bps_hz",
                   "mean_cell_se_bps_hz", "mean_prb_pct", "ho_total", "mean_h_u")
COMPARE_COLUMNS = ("policy", "n_runs", "metric", "mean", "min", "max")


def compare_runs(rows: Iterable[dict]) -> list[tuple]:
    """Mean and min/max across seeds of each metric, grouped by policy."""
    groups: dict[str, list[dict]] = defaultdict(list)
    for r in rows:
        groups[r["policy"]].append(r)
    out = []
    for policy in sorted(groups):
        g = groups[policy]
        for k in COMPARE_METRICS:
            vals = [float(r[k]) for r in g]
            out.append((policy, len(g), k, math.fsum(vals) / len(vals), min(vals), max(vals)))
    return out


def metrics_from_row(row: dict) -> dict:
    """Typed view of a ``metrics.csv`` row."""
    typed = {}
    for k, v in row.items():
        if k in ("run_id", "policy", "band"):
            typed[k] = v
        elif k in ("seed", "n_ues", "ho_total"):
            typed[k] = int(v)
        else:
            typed[k] = float(v)
    return typed


__all__ = [
    "MetricsError", "RunMetrics", "UeMetrics", "accounting_gap", "compare_runs",
    "compute_metrics", "export_metrics", "handover_counts", "load_logs", "mobility_overhead",
    "percentile", "read_csv", "sinr_cdf", "spectral_efficiency", "write_csv",
]
