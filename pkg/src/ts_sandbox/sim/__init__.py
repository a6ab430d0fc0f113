"""Seeded discrete-time EN-DC RAN simulator."""

from .config import Band, ConfigError, SimConfig, TrafficModel
from .radio import (
    LTE_CELL_ID, Cell, CellKind, Modulation, Topology, build_topology, compute_sinr_db,
    mcs_from_sinr, pathloss_db,
)
from .scheduler import Grant, RoundRobinScheduler, SchedulingError, UeLink, schedule_cell
from .world import (
    CellKpm, KpmReport, SimError, UeKpm, UeSim, World, advance_window, collect_reports,
    execute_handover, generate_kpm_report, step,
)
