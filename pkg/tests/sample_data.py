"""Builds testdata/sample_transitions.bin; run as a script to regenerate."""

from __future__ import annotations

from pathlib import Path

from ts_sandbox.experiment import run_simulation
from ts_sandbox.rl.dataset import build_transitions, write_bin
from ts_sandbox.sim import Band, SimConfig

SAMPLE = Path(__file__).resolve().parent.parent / "testdata" / "sample_transitions.bin"


def build():
    cfg = SimConfig.for_band(Band.LOW850, seed=11, sim_duration_ms=12_000)
    return build_transitions(run_simulation(cfg, "explore:0.2:son1").records)


if __name__ == "__main__":
    data = build()
    write_bin(SAMPLE, data)
    print(f"{len(data)} transitions -> {SAMPLE}")
