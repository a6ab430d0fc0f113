"""Run orchestration: one simulation under one policy, its outputs and manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .e2lite import default_bindings
from .eval import (
    CELL_LOG_COLUMNS, EVENT_COLUMNS, UE_LOG_COLUMNS, RunMetrics, compute_metrics, export_metrics,
    write_csv,
)
from .policies import Policy, resolve_policy
from .ric.records import UeStateRecord, record_columns, record_row
from .ric.service import RicService
from .runner import EmbeddedTransport, SimDriver, TcpTransport
from .sim.config import SimConfig
from .sim.radio import LTE_CELL_ID
from .sim.world import World

MANIFEST = "manifest.json"
DEFAULT_BASE_PORT = 36400
XAPP_ID = "ts-xapp"


class RunError(RuntimeError):
    pass


def version_string() -> str:
    """Package version plus ``git describe`` of the source tree when available."""
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}+{desc}" if desc else __version__


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_id_for(policy_id: str, seed: int) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", f"{policy_id}-s{seed}")


@dataclass
class RunResult:
    config: SimConfig
    policy_id: str
    world: World
    ric: RicService | None
    driver: SimDriver
    records: list[tuple[UeStateRecord, int]] = field(default_factory=list)

    @property
    def run_id(self) -> str:
        return run_id_for(self.policy_id, self.config.seed)

    def metrics(self) -> RunMetrics:
        return metrics_for(self.world, run_id=self.run_id, policy=self.policy_id)


def metrics_for(world: World, **labels) -> RunMetrics:
    cfg = world.config
    bw = {c.cell_id: c.bandwidth_hz for c in world.topology.cells}
    labels.setdefault("seed", cfg.seed)
    labels.setdefault("band", cfg.band.value)
    return compute_metrics(world.ue_window_log, world.cell_window_log, world.events,
                           cfg.sim_duration_ms / 1000.0, bw, (LTE_CELL_ID,), **labels)


def make_ric(policy: Policy, world: World, records: list | None = None,
             epsilon_ms: int = 300) -> RicService:
    sink = None if records is None else (lambda rec, target: records.append((rec, target)))
    ric = RicService(policy, world.topology.nr_cell_ids, epsilon_ms=epsilon_ms,
                     period_ms=world.config.report_period_ms, record_sink=sink)
    for node_id in sorted(world.cell_index):
        ric.request_subscription(XAPP_ID, node_id)
    return ric


def run_simulation(config: SimConfig, policy: str | Policy, *, ric_addr: tuple[str, int] | None = None,
                   base_port: int = DEFAULT_BASE_PORT, bind_address: str = "127.0.0.1",
                   base_unix_ms: int | None = None, epsilon_ms: int = 300,
                   capture: bool = False) -> RunResult:
    """Run to ``sim_duration_ms`` with an embedded RIC, or against ``ric_addr`` over TCP."""
    if isinstance(policy, str):
        policy_id, policy = policy, resolve_policy(policy, config.seed)
    else:
        policy_id = getattr(policy, "name", type(policy).__name__)
    world = World(config)
    records: list[tuple[UeStateRecord, int]] = []
    if ric_addr is None:
        ric = make_ric(policy, world, records, epsilon_ms)
        transport = EmbeddedTransport(ric)
    else:
        ric = None
        bindings = default_bindings(sorted(world.cell_index), base_port, bind_address)
        transport = TcpTransport(ric_addr[0], ric_addr[1], bindings)
    driver = SimDriver(world, transport, base_unix_ms, capture=capture)
    driver.run()
    return RunResult(config, policy_id, world, ric, driver, records)


def write_records(path: Path, records: list[tuple[UeStateRecord, int]], n_cells: int) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(record_columns(n_cells))
        for rec, action in records:
            w.writerow(record_row(rec, action))
    return path


def write_manifest(out_dir: Path, payload: dict, exclude: tuple[str, ...] = ()) -> Path:
    """Checksum every file in ``out_dir`` (except the manifest) and write the manifest."""
    files = {p.name: sha256_file(p) for p in sorted(out_dir.iterdir())
             if p.is_file() and p.name != MANIFEST and p.name not in exclude}
    manifest = {**payload, "version": version_string(), "files": files}
    path = out_dir / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(out_dir: Path | str) -> list[str]:
    """Names of files whose checksum no longer matches (empty when intact)."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST).read_text())
    bad = []
    for name, digest in manifest["files"].items():
        p = out_dir / name
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(name)
    return bad


def write_run_outputs(result: RunResult, out_dir: Path | str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    w = result.world
    write_csv(out / "events.csv", EVENT_COLUMNS, w.events)
    write_csv(out / "ue_windows.csv", UE_LOG_COLUMNS, w.ue_window_log)
    write_csv(out / "cell_windows.csv", CELL_LOG_COLUMNS, w.cell_window_log)
    if result.ric is not None:
        write_records(out / "records.csv", result.records, len(w.topology.nr_cells))
    export_metrics(result.metrics(), out)
    return write_manifest(out, {
        "kind": "run",
        "run_id": result.run_id,
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "policy": result.policy_id,
        "out_dir": str(out_dir),
        "state_digest": w.state_digest(),
    })
