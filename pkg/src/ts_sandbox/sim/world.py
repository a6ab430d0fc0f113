"""Discrete-time EN-DC world: mobility, traffic, scheduling, handover, KPM."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig, TrafficModel
from .radio import (
    LTE_CELL_ID, CellKind, Modulation, Topology, build_topology, mcs_from_sinr,
    sinr_matrix_db,
)
from .scheduler import RoundRobinScheduler, UeLink
from .traffic import TrafficSource


class SimError(ValueError):
    pass


@dataclass
class UeSim:
    ue_id: int
    x: float
    y: float
    vx: float
    vy: float
    serving_nr_cell: int
    lte_anchor: int
    traffic_model: TrafficModel
    last_ho_time_ms: int = 0
    ho_freeze_until_ms: int = 0
    backlog_nr_bits: float = 0.0
    backlog_lte_bits: float = 0.0
    nr_fraction: float = 1.0  # share of new PDCP arrivals routed to the NR leg

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def backlog_bits(self) -> float:
        return self.backlog_nr_bits + self.backlog_lte_bits


@dataclass
class CellKpm:
    cell_id: int
    prb_util_pct: float
    active_ues: float
    tb_count: float
    share_qpsk: float
    share_16qam: float
    share_64qam: float

    FIELDS = ("prb_util_pct", "active_ues", "tb_count", "share_qpsk", "share_16qam", "share_64qam")


@dataclass
class UeKpm:
    ue_id: int
    pdcp_throughput_bps: float
    sinr_db_by_cell: dict[int, float]


@dataclass
class KpmReport:
    node_id: int
    window_end_ms: int
    cell_level: CellKpm
    ue_level: list[UeKpm] = field(default_factory=list)


@dataclass
class _CellWindow:
    prbs: int = 0
    bits: float = 0.0
    tb: list[int] = field(default_factory=lambda: [0, 0, 0])  # QPSK, 16QAM, 64QAM
    active: set[int] = field(default_factory=set)


@dataclass
class _UeWindow:
    bits_nr: float = 0.0
    bits_lte: float = 0.0
    bits_by_cell: dict[int, float] = field(default_factory=dict)


@dataclass
class WindowStats:
    """Accumulators for one report window (closed at window end)."""

    start_ms: int
    end_ms: int
    cells: dict[int, _CellWindow]
    ues: dict[int, _UeWindow]
    sinr_sum_db: np.ndarray  # (n_ues, n_cells), summed over steps
    n_steps: int = 0

    def mean_sinr_db(self) -> np.ndarray:
        return self.sinr_sum_db / max(self.n_steps, 1)


class World:
    """Mutable simulation state, advanced by :func:`step`."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.topology: Topology = build_topology(config)
        self.time_ms = 0
        ss = np.random.SeedSequence(config.seed)
        (drop_ss, mob_ss, traffic_ss, shadow_ss, kpm_ss) = ss.spawn(5)
        self.mobility_rng = np.random.default_rng(mob_ss)
        self.shadow_rng = np.random.default_rng(shadow_ss)
        self.kpm_rng = np.random.default_rng(kpm_ss)
        drop_rng = np.random.default_rng(drop_ss)
        traffic_rngs = [np.random.default_rng(s) for s in traffic_ss.spawn(config.n_ues)]

        cells = self.topology.cells
        self.cell_index = {c.cell_id: i for i, c in enumerate(cells)}
        self.nr_ids = self.topology.nr_cell_ids
        self.schedulers = {
            c.cell_id: RoundRobinScheduler(c, config.slot_ms, config.mcs_thresholds_db,
                                           config.mcs_spectral_eff)
            for c in cells
        }
        self.shadowing_db = np.zeros((config.n_ues, len(cells)))
        self.ues: list[UeSim] = []
        self.traffic: list[TrafficSource] = []
        for i in range(config.n_ues):
            x, y = self._drop(drop_rng)
            model = config.traffic_models[i % len(config.traffic_models)]
            self.ues.append(UeSim(i, float(x), float(y), 0.0, 0.0, self.nr_ids[0],
                                  LTE_CELL_ID, model))
            self.traffic.append(TrafficSource(model, traffic_rngs[i], config.bursty_on_mean_ms,
                                              config.bursty_off_mean_ms))
        self.events: list[tuple[int, int, str, str]] = []
        # initial PSCell: strongest mean received signal (no shadowing)
        sinr0 = sinr_matrix_db(self._xy(), self.topology, self.shadowing_db)
        candidates = [c for c in self.nr_ids
                      if config.scenario != "dominant_cell" or c != config.dominant_cell_id]
        cols = [self.cell_index[c] for c in candidates]
        for ue in self.ues:
            best = int(np.argmax(sinr0[ue.ue_id, cols]))
            ue.serving_nr_cell = candidates[best]
            self.events.append((0, ue.ue_id, "attach", f"cell={ue.serving_nr_cell}"))
        self._sinr_now = sinr0
        self._last_z = {c.cell_id: 0 for c in cells}
        self._last_sinr = sinr0
        self.window: WindowStats | None = None
        self.last_window: WindowStats | None = None
        self.ue_window_log: list[tuple] = []
        self.cell_window_log: list[tuple] = []
        self._redraw_direction(force=True)

    # -- helpers -----------------------------------------------------------------

    def _xy(self) -> np.ndarray:
        return np.array([[u.x, u.y] for u in self.ues], dtype=float).reshape(-1, 2)

    def _drop(self, rng: np.random.Generator) -> tuple[float, float]:
        cfg = self.config
        if cfg.scenario == "dominant_cell":
            c = self.topology.cell(cfg.dominant_cell_id)
            r = cfg.cluster_radius_m * math.sqrt(rng.uniform())
            a = rng.uniform(0.0, 2.0 * math.pi)
            return c.x + r * math.cos(a), c.y + r * math.sin(a)
        xmin, ymin, xmax, ymax = self.topology.bounds
        return float(rng.uniform(xmin, xmax)), float(rng.uniform(ymin, ymax))

    def ue(self, ue_id: int) -> UeSim:
        if not 0 <= ue_id < len(self.ues) or self.ues[ue_id].ue_id != ue_id:
            raise SimError(f"unknown ue_id {ue_id}")
        return self.ues[ue_id]

    def _redraw_direction(self, force: bool = False) -> None:
        cfg = self.config
        if not force and self.time_ms % cfg.direction_hold_ms:
            return
        for ue in self.ues:
            speed = self.mobility_rng.uniform(cfg.speed_min_mps, cfg.speed_max_mps)
            angle = self.mobility_rng.uniform(0.0, 2.0 * math.pi)
            ue.vx, ue.vy = speed * math.cos(angle), speed * math.sin(angle)

    def _begin_window(self) -> None:
        cfg = self.config
        n_cells = len(self.topology.cells)
        if cfg.shadowing_sigma_db > 0:
            self.shadowing_db = self.shadow_rng.normal(0.0, cfg.shadowing_sigma_db,
                                                       (cfg.n_ues, n_cells))
        # PDCP split: proportional to each leg's last-window achievable rate
        lte_idx = self.cell_index[LTE_CELL_ID]
        lte = self.topology.lte_cell
        for ue in self.ues:
            nr_idx = self.cell_index[ue.serving_nr_cell]
            nr = self.topology.cells[nr_idx]
            _, se_nr = mcs_from_sinr(self._last_sinr[ue.ue_id, nr_idx],
                                     cfg.mcs_thresholds_db, cfg.mcs_spectral_eff)
            _, se_lte = mcs_from_sinr(self._last_sinr[ue.ue_id, lte_idx],
                                      cfg.mcs_thresholds_db, cfg.mcs_spectral_eff)
            r_nr = se_nr * nr.bandwidth_hz / max(1, self._last_z[nr.cell_id])
            r_lte = se_lte * lte.bandwidth_hz / max(1, self._last_z[LTE_CELL_ID])
            ue.nr_fraction = r_nr / (r_nr + r_lte) if r_nr + r_lte > 0 else 1.0
        self.window = WindowStats(
            start_ms=self.time_ms,
            end_ms=self.time_ms + cfg.report_period_ms,
            cells={c.cell_id: _CellWindow() for c in self.topology.cells},
            ues={u.ue_id: _UeWindow() for u in self.ues},
            sinr_sum_db=np.zeros((cfg.n_ues, n_cells)),
        )

    def _close_window(self) -> None:
        w = self.window
        cfg = self.config
        bad = window_violations(self, w)
        if bad:
            raise SimError(f"window ending {w.end_ms} ms violates invariants: {'; '.join(bad)}")
        mean_sinr = w.mean_sinr_db()
        for ue in self.ues:
            uw = w.ues[ue.ue_id]
            self.ue_window_log.append((
                w.end_ms, ue.ue_id, ue.serving_nr_cell, uw.bits_nr, uw.bits_lte,
                float(mean_sinr[ue.ue_id, self.cell_index[ue.serving_nr_cell]]),
            ))
        slots = cfg.report_period_ms // cfg.slot_ms
        for c in self.topology.cells:
            cw = w.cells[c.cell_id]
            self.cell_window_log.append((
                w.end_ms, c.cell_id, c.kind.value, 100.0 * cw.prbs / (c.n_prb * slots),
                cw.bits, sum(cw.tb), len(cw.active),
            ))
            self._last_z[c.cell_id] = len(cw.active)
        self._last_sinr = mean_sinr
        self.last_window = w
        self.window = None

    # -- public state ------------------------------------------------------------

    def state_digest(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<q", self.time_ms))
        for ue, tr in zip(self.ues, self.traffic):
            h.update(struct.pack(
                "<qddddqqqdd?d", ue.ue_id, ue.x, ue.y, ue.vx, ue.vy, ue.serving_nr_cell,
                ue.last_ho_time_ms, ue.ho_freeze_until_ms, ue.backlog_nr_bits,
                ue.backlog_lte_bits, tr.on, tr.phase_left_ms if math.isfinite(tr.phase_left_ms) else -1.0,
            ))
        h.update(self.shadowing_db.tobytes())
        for ev in self.events:
            h.update(repr(ev).encode())
        for row in self.ue_window_log:
            h.update(repr(row).encode())
        for row in self.cell_window_log:
            h.update(repr(row).encode())
        return h.hexdigest()

    @property
    def duration_done(self) -> bool:
        return self.time_ms >= self.config.sim_duration_ms


def window_violations(world: World, w: WindowStats) -> list[str]:
    """Capacity, range and accounting checks for one closed window (empty when clean)."""
    cfg = world.config
    slots = (w.end_ms - w.start_ms) // cfg.slot_ms
    slot_s = cfg.slot_ms / 1000.0
    top_se = max(cfg.mcs_spectral_eff)
    out = []
    for c in world.topology.cells:
        cw = w.cells[c.cell_id]
        cap = c.n_prb * slots * (c.bandwidth_hz / c.n_prb) * top_se * slot_s
        if cw.bits > cap * (1 + 1e-12):
            out.append(f"cell {c.cell_id} served {cw.bits:.0f} bits > capacity {cap:.0f}")
        if not 0 <= cw.prbs <= c.n_prb * slots:
            out.append(f"cell {c.cell_id} PRB count {cw.prbs} out of range")
        if cw.tb and sum(cw.tb) > slots * len(cw.active):
            out.append(f"cell {c.cell_id} has more TBs than (UE, slot) pairs")
    ue_bits = sum(u.bits_nr + u.bits_lte for u in w.ues.values())
    cell_bits = sum(cw.bits for cw in w.cells.values())
    if ue_bits != cell_bits:
        out.append(f"UE bits {ue_bits} != cell bits {cell_bits}")
    return out


def step(world: World, dt_ms: int | None = None) -> World:
    """Advance the world by one simulation step."""
    cfg = world.config
    if dt_ms is None:
        dt_ms = cfg.sim_step_ms
    if dt_ms != cfg.sim_step_ms:
        raise SimError(f"dt_ms must equal sim_step_ms={cfg.sim_step_ms}, got {dt_ms}")
    if world.time_ms % cfg.report_period_ms == 0 or world.window is None:
        world._begin_window()
    world._redraw_direction()
    _move(world, dt_ms)

    sinr = sinr_matrix_db(world._xy(), world.topology, world.shadowing_db)
    world._sinr_now = sinr
    w = world.window
    w.sinr_sum_db += sinr
    w.n_steps += 1

    frozen = {u.ue_id for u in world.ues if world.time_ms < u.ho_freeze_until_ms}
    cap_factor = cfg.bursty_backlog_cap_s
    for ue, src in zip(world.ues, world.traffic):
        bits = src.arrivals_bits(dt_ms)
        if src.full_buffer:
            # MBR-capped: offered load never accumulates beyond rate * dt
            ue.backlog_nr_bits = bits * ue.nr_fraction
            ue.backlog_lte_bits = bits * (1.0 - ue.nr_fraction)
        else:
            ue.backlog_nr_bits += bits * ue.nr_fraction
            ue.backlog_lte_bits += bits * (1.0 - ue.nr_fraction)
            cap = cap_factor * src.rate_bps
            total = ue.backlog_bits
            if total > cap:
                scale = cap / total
                ue.backlog_nr_bits *= scale
                ue.backlog_lte_bits *= scale

    for cell in world.topology.cells:
        ci = world.cell_index[cell.cell_id]
        links, demand = [], {}
        for ue in world.ues:
            if ue.ue_id in frozen:
                continue
            if cell.kind is CellKind.NR:
                if ue.serving_nr_cell != cell.cell_id:
                    continue
                d = ue.backlog_nr_bits
            else:
                d = ue.backlog_lte_bits
            links.append(UeLink(ue.ue_id, cell.cell_id, float(sinr[ue.ue_id, ci])))
            demand[ue.ue_id] = d
        if not links:
            continue
        grants = world.schedulers[cell.cell_id].schedule(links, demand, dt_ms)
        cw = w.cells[cell.cell_id]
        for uid, g in grants.items():
            if g.tb_count == 0:
                continue
            ue = world.ues[uid]
            uw = w.ues[uid]
            cw.prbs += g.prbs_granted
            cw.bits += g.bits_served
            cw.tb[g.modulation - 1] += g.tb_count
            cw.active.add(uid)
            uw.bits_by_cell[cell.cell_id] = uw.bits_by_cell.get(cell.cell_id, 0.0) + g.bits_served
            if cell.kind is CellKind.NR:
                uw.bits_nr += g.bits_served
                ue.backlog_nr_bits = max(0.0, ue.backlog_nr_bits - g.bits_served)
            else:
                uw.bits_lte += g.bits_served
                ue.backlog_lte_bits = max(0.0, ue.backlog_lte_bits - g.bits_served)

    world.time_ms += dt_ms
    if world.time_ms % cfg.report_period_ms == 0:
        world._close_window()
    return world


def _move(world: World, dt_ms: int) -> None:
    xmin, ymin, xmax, ymax = world.topology.bounds
    dt = dt_ms / 1000.0
    for ue in world.ues:
        x, y = ue.x + ue.vx * dt, ue.y + ue.vy * dt
        if x > xmax:
            x, ue.vx = 2 * xmax - x, -ue.vx
        elif x < xmin:
            x, ue.vx = 2 * xmin - x, -ue.vx
        if y > ymax:
            y, ue.vy = 2 * ymax - y, -ue.vy
        elif y < ymin:
            y, ue.vy = 2 * ymin - y, -ue.vy
        ue.x, ue.y = x, y


def execute_handover(world: World, ue_id: int, target_cell: int) -> World:
    """Switch the UE's PSCell. Same-cell targets are the no-handover action."""
    ue = world.ue(ue_id)
    if target_cell not in world.nr_ids:
        raise SimError(f"target {target_cell} is not an NR cell")
    if target_cell == ue.serving_nr_cell:
        return world
    since = world.time_ms - ue.last_ho_time_ms
    world.events.append((world.time_ms, ue_id, "handover",
                         f"from={ue.serving_nr_cell};to={target_cell};since_last_ms={since}"))
    ue.serving_nr_cell = target_cell
    ue.last_ho_time_ms = world.time_ms
    ue.ho_freeze_until_ms = world.time_ms + world.config.ho_interruption_ms
    return world


def generate_kpm_report(world: World, node_id: int, window_end_ms: int) -> KpmReport:
    """KPM report of one E2 node (one cell) for the window ending at ``window_end_ms``."""
    cfg = world.config
    if window_end_ms % cfg.report_period_ms:
        raise SimError(f"window_end_ms {window_end_ms} not aligned to the report period")
    w = world.last_window
    if w is None or w.end_ms != window_end_ms:
        raise SimError(f"no completed window ending at {window_end_ms} ms")
    cell = world.topology.cell(node_id)
    cw = w.cells[node_id]
    slots = cfg.report_period_ms // cfg.slot_ms
    p = sum(cw.tb)
    shares = [n / p for n in cw.tb] if p else [0.0, 0.0, 0.0]
    cell_kpm = CellKpm(node_id, 100.0 * cw.prbs / (cell.n_prb * slots), float(len(cw.active)),
                       float(p), *shares)
    ue_level = []
    if cell.kind is CellKind.NR:
        mean_sinr = w.mean_sinr_db()
        window_s = (w.end_ms - w.start_ms) / 1000.0
        for ue in world.ues:
            if ue.serving_nr_cell != node_id:
                continue
            uw = w.ues[ue.ue_id]
            sinr = {cid: float(mean_sinr[ue.ue_id, world.cell_index[cid]]) for cid in world.nr_ids}
            ue_level.append(UeKpm(ue.ue_id, (uw.bits_nr + uw.bits_lte) / window_s, sinr))
    return KpmReport(node_id, window_end_ms, cell_kpm, ue_level)


def apply_field_loss(report: KpmReport, rng: np.random.Generator, prob: float) -> KpmReport:
    """Drop cell-level fields (set NaN) independently with probability ``prob``."""
    if prob <= 0:
        return report
    for name in CellKpm.FIELDS:
        if rng.random() < prob:
            setattr(report.cell_level, name, float("nan"))
    return report


def collect_reports(world: World) -> list[KpmReport]:
    """Reports of every node for the window that just closed (LTE node first)."""
    end = world.last_window.end_ms
    reports = []
    for cid in sorted(world.cell_index):
        r = generate_kpm_report(world, cid, end)
        reports.append(apply_field_loss(r, world.kpm_rng, world.config.kpm_field_loss_prob))
    return reports


def advance_window(world: World) -> World:
    for _ in range(world.config.steps_per_window):
        step(world)
    return world


__all__ = [
    "CellKpm", "KpmReport", "Modulation", "SimError", "UeKpm", "UeSim", "WindowStats", "World",
    "advance_window", "apply_field_loss", "collect_reports", "execute_handover",
    "generate_kpm_report", "step", "window_violations",
]
