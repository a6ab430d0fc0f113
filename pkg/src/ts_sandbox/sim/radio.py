"""Deployment geometry, propagation and link adaptation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import SimConfig

THERMAL_NOISE_DBM_HZ = -174.0
LTE_CELL_ID = 0


class CellKind(str, enum.Enum):
    NR = "NR"
    LTE = "LTE"


class Modulation(enum.IntEnum):
    OUTAGE = 0
    QPSK = 1
    QAM16 = 2
    QAM64 = 3


@dataclass(frozen=True)
class Cell:
    cell_id: int
    kind: CellKind
    x: float
    y: float
    tx_power_dbm: float
    bandwidth_hz: float
    n_prb: int

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Topology:
    cells: tuple[Cell, ...]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    carrier_freq_hz: float
    noise_figure_db: float = 7.0

    def cell(self, cell_id: int) -> Cell:
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        raise KeyError(f"unknown cell_id {cell_id}")

    @property
    def nr_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.NR)

    @property
    def nr_cell_ids(self) -> tuple[int, ...]:
        return tuple(sorted(c.cell_id for c in self.nr_cells))

    @property
    def lte_cell(self) -> Cell:
        return next(c for c in self.cells if c.kind is CellKind.LTE)

    def index_of(self, cell_id: int) -> int:
        for i, c in enumerate(self.cells):
            if c.cell_id == cell_id:
                return i
        raise KeyError(f"unknown cell_id {cell_id}")


def n_prb_for(bandwidth_hz: float, prb_bandwidth_hz: float) -> int:
    # 90% spectrum occupancy, as in LTE/NR channel rasters
    return int(math.floor(0.9 * bandwidth_hz / prb_bandwidth_hz + 1e-9))


def build_topology(config: SimConfig) -> Topology:
    """Central NR cell co-located with the LTE eNB plus a hexagonal ring of NR cells.

    NR cells get ids 1..n_nr_cells (1 is the centre); ring cell ``k`` sits at
    angle ``60 deg * (k - 2)`` and distance ``isd_m``. The LTE anchor is cell 0.
    """
    config.validate()
    n_nr = n_prb_for(config.nr_bandwidth_hz, config.prb_bandwidth_hz)
    n_lte = n_prb_for(config.lte_bandwidth_hz, config.prb_bandwidth_hz)
    cells = [
        Cell(LTE_CELL_ID, CellKind.LTE, 0.0, 0.0, config.lte_tx_power_dbm,
             config.lte_bandwidth_hz, n_lte),
        Cell(1, CellKind.NR, 0.0, 0.0, config.nr_tx_power_dbm, config.nr_bandwidth_hz, n_nr),
    ]
    for k in range(config.n_nr_cells - 1):
        angle = math.radians(60.0 * k)
        cells.append(
            Cell(k + 2, CellKind.NR, config.isd_m * math.cos(angle),
                 config.isd_m * math.sin(angle), config.nr_tx_power_dbm,
                 config.nr_bandwidth_hz, n_nr)
        )
    half = config.isd_m + config.bounds_margin_m
    return Topology(
        cells=tuple(cells),
        bounds=(-half, -half, half, half),
        carrier_freq_hz=config.carrier_freq_hz,
        noise_figure_db=config.noise_figure_db,
    )


def pathloss_db(distance_m, carrier_freq_hz: float):
    """UMa LOS single-slope pathloss ``28 + 22 log10(d) + 20 log10(f_GHz)``.

    Distances below 1 m are clamped to 1 m. Works elementwise on arrays.
    """
    d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
    pl = 28.0 + 22.0 * np.log10(d) + 20.0 * math.log10(carrier_freq_hz / 1e9)
    return float(pl) if pl.ndim == 0 else pl


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def _rx_power_dbm(cell: Cell, x: float, y: float, freq: float, shadow_db: float) -> float:
    d = math.hypot(x - cell.x, y - cell.y)
    return cell.tx_power_dbm - pathloss_db(d, freq) - shadow_db


def compute_sinr_db(ue, cell_id: int, topo: Topology,
                    shadowing_db: Mapping[int, float] | None = None) -> float:
    """Downlink SINR of ``ue`` w.r.t. ``cell_id``.

    Every other cell of the same kind is an interferer transmitting at full
    power. ``ue`` needs ``x`` and ``y`` attributes (or a ``position`` pair).
    """
    target = topo.cell(cell_id)
    x, y = _ue_xy(ue)
    shadowing_db = shadowing_db or {}
    f = topo.carrier_freq_hz
    signal_mw = 10 ** (_rx_power_dbm(target, x, y, f, shadowing_db.get(cell_id, 0.0)) / 10)
    interference_mw = 0.0
    for c in topo.cells:
        if c.kind is target.kind and c.cell_id != cell_id:
            interference_mw += 10 ** (
                _rx_power_dbm(c, x, y, f, shadowing_db.get(c.cell_id, 0.0)) / 10
            )
    noise_mw = 10 ** (noise_power_dbm(target.bandwidth_hz, topo.noise_figure_db) / 10)
    return 10.0 * math.log10(signal_mw / (interference_mw + noise_mw))


def _ue_xy(ue) -> tuple[float, float]:
    if hasattr(ue, "x"):
        return float(ue.x), float(ue.y)
    x, y = ue.position
    return float(x), float(y)


def sinr_matrix_db(xy: np.ndarray, topo: Topology, shadowing_db: np.ndarray) -> np.ndarray:
    """Vectorised SINR for all UEs (rows) against all cells (columns, topology order)."""
    cx = np.array([c.x for c in topo.cells])
    cy = np.array([c.y for c in topo.cells])
    ptx = np.array([c.tx_power_dbm for c in topo.cells])
    d = np.hypot(xy[:, :1] - cx[None, :], xy[:, 1:2] - cy[None, :])
    rx_mw = 10 ** ((ptx[None, :] - pathloss_db(d, topo.carrier_freq_hz) - shadowing_db) / 10)
    out = np.empty_like(rx_mw)
    for kind in CellKind:
        cols = np.array([c.kind is kind for c in topo.cells])
        if not cols.any():
            continue
        bw = next(c.bandwidth_hz for c in topo.cells if c.kind is kind)
        noise_mw = 10 ** (noise_power_dbm(bw, topo.noise_figure_db) / 10)
        total = rx_mw[:, cols].sum(axis=1, keepdims=True)
        sub = rx_mw[:, cols]
        out[:, cols] = 10 * np.log10(sub / (total - sub + noise_mw))
    return out


def mcs_from_sinr(sinr_db: float, thresholds_db=(0.0, 10.0, 18.0),
                  spectral_eff=(1.0, 2.4, 4.0)) -> tuple[Modulation, float]:
    """Piecewise-constant link adaptation: returns (modulation, bit/s/Hz)."""
    if sinr_db >= thresholds_db[2]:
        return Modulation.QAM64, spectral_eff[2]
    if sinr_db >= thresholds_db[1]:
        return Modulation.QAM16, spectral_eff[1]
    if sinr_db >= thresholds_db[0]:
        return Modulation.QPSK, spectral_eff[0]
    return Modulation.OUTAGE, 0.0
