"""Simulation configuration and band presets."""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class Band(str, enum.Enum):
    LOW850 = "Low850"
    CBAND3500 = "CBand3500"


class TrafficModel(str, enum.Enum):
    FULL_BUFFER_20M = "FullBuffer20M"
    BURSTY_3M = "Bursty3M"
    BURSTY_750K = "Bursty750k"
    BURSTY_150K = "Bursty150k"


# nominal long-run rate of each traffic model, bit/s
TRAFFIC_RATE_BPS = {
    TrafficModel.FULL_BUFFER_20M: 20e6,
    TrafficModel.BURSTY_3M: 3e6,
    TrafficModel.BURSTY_750K: 750e3,
    TrafficModel.BURSTY_150K: 150e3,
}

TRAFFIC_MIX = (
    TrafficModel.FULL_BUFFER_20M,
    TrafficModel.BURSTY_3M,
    TrafficModel.BURSTY_750K,
    TrafficModel.BURSTY_150K,
)

_BAND_PRESETS = {
    Band.LOW850: {"carrier_freq_hz": 850e6, "isd_m": 1700.0},
    Band.CBAND3500: {"carrier_freq_hz": 3.5e9, "isd_m": 1000.0},
}


SCENARIOS = ("uniform", "dominant_cell")


class ConfigError(ValueError):
    """Raised for an invalid :class:`SimConfig`."""


@dataclass(frozen=True)
class SimConfig:
    band: Band = Band.LOW850
    carrier_freq_hz: float = 850e6
    isd_m: float = 1700.0
    nr_bandwidth_hz: float = 20e6
    lte_bandwidth_hz: float = 10e6
    n_nr_cells: int = 7
    n_lte_cells: int = 1
    n_ues: int = 20
    speed_min_mps: float = 2.0
    speed_max_mps: float = 4.0
    report_period_ms: int = 100
    sim_step_ms: int = 10
    sim_duration_ms: int = 60_000
    ho_interruption_ms: int = 30
    seed: int = 0

    # radio
    nr_tx_power_dbm: float = 43.0
    lte_tx_power_dbm: float = 46.0
    noise_figure_db: float = 7.0
    shadowing_sigma_db: float = 4.0
    prb_bandwidth_hz: float = 180e3
    slot_ms: int = 1
    # outage < t0 <= QPSK < t1 <= 16QAM < t2 <= 64QAM
    mcs_thresholds_db: tuple[float, float, float] = (0.0, 10.0, 18.0)
    mcs_spectral_eff: tuple[float, float, float] = (1.0, 2.4, 4.0)

    # mobility
    direction_hold_ms: int = 1000
    bounds_margin_m: float = 200.0

    # traffic
    bursty_on_mean_ms: float = 200.0
    bursty_off_mean_ms: float = 200.0
    bursty_backlog_cap_s: float = 2.0
    traffic_models: tuple[TrafficModel, ...] = field(default=TRAFFIC_MIX)

    # probability that any single cell-level KPM field is lost in transit
    kpm_field_loss_prob: float = 0.0

    # UE placement. "uniform" drops UEs over the whole area and attaches each to
    # its strongest cell. "dominant_cell" drops them within cluster_radius_m of
    # dominant_cell_id but attaches them to the strongest of the other NR cells,
    # which leaves one clearly better and empty target (a steering test).
    scenario: str = "uniform"
    dominant_cell_id: int = 3
    cluster_radius_m: float = 200.0

    @classmethod
    def for_band(cls, band: Band | str, **overrides: Any) -> "SimConfig":
        band = Band(band)
        values: dict[str, Any] = {"band": band, **_BAND_PRESETS[band]}
        values.update(overrides)
        return cls(**values)

    def __post_init__(self) -> None:
        object.__setattr__(self, "band", Band(self.band))
        object.__setattr__(
            self, "traffic_models", tuple(TrafficModel(t) for t in self.traffic_models)
        )
        object.__setattr__(self, "mcs_thresholds_db", tuple(self.mcs_thresholds_db))
        object.__setattr__(self, "mcs_spectral_eff", tuple(self.mcs_spectral_eff))
        self.validate()

    def validate(self) -> None:
        positive = (
            "carrier_freq_hz", "isd_m", "nr_bandwidth_hz", "lte_bandwidth_hz",
            "report_period_ms", "sim_step_ms", "sim_duration_ms", "prb_bandwidth_hz",
            "slot_ms", "direction_hold_ms", "bursty_on_mean_ms", "bursty_off_mean_ms",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not 1 <= self.n_nr_cells <= 7:
            raise ConfigError(f"n_nr_cells must be in 1..7, got {self.n_nr_cells}")
        if self.n_lte_cells != 1:
            raise ConfigError("exactly one LTE anchor cell is supported")
        if self.n_ues < 0:
            raise ConfigError(f"n_ues must be >= 0, got {self.n_ues}")
        if not 0 <= self.speed_min_mps <= self.speed_max_mps:
            raise ConfigError(
                f"need 0 <= speed_min_mps <= speed_max_mps, got "
                f"{self.speed_min_mps}, {self.speed_max_mps}"
            )
        if self.report_period_ms % self.sim_step_ms:
            raise ConfigError("sim_step_ms must divide report_period_ms")
        if self.sim_step_ms % self.slot_ms:
            raise ConfigError("slot_ms must divide sim_step_ms")
        if self.sim_duration_ms % self.report_period_ms:
            raise ConfigError("sim_duration_ms must be a multiple of report_period_ms")
        if self.ho_interruption_ms < 0:
            raise ConfigError("ho_interruption_ms must be >= 0")
        t = self.mcs_thresholds_db
        if len(t) != 3 or not t[0] <= t[1] <= t[2]:
            raise ConfigError(f"mcs_thresholds_db must be 3 nondecreasing values, got {t}")
        se = self.mcs_spectral_eff
        if len(se) != 3 or not 0 < se[0] <= se[1] <= se[2]:
            raise ConfigError(f"mcs_spectral_eff must be 3 increasing positive values, got {se}")
        if not self.traffic_models:
            raise ConfigError("traffic_models must not be empty")
        if not 0.0 <= self.kpm_field_loss_prob <= 1.0:
            raise ConfigError("kpm_field_loss_prob must be in [0, 1]")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db must be >= 0")
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.scenario == "dominant_cell":
            if self.n_nr_cells < 2:
                raise ConfigError("dominant_cell scenario needs at least 2 NR cells")
            if not 1 <= self.dominant_cell_id <= self.n_nr_cells:
                raise ConfigError(f"dominant_cell_id must be in 1..{self.n_nr_cells}")
            if self.cluster_radius_m <= 0:
                raise ConfigError("cluster_radius_m must be > 0")

    @property
    def steps_per_window(self) -> int:
        return self.report_period_ms // self.sim_step_ms

    @property
    def n_windows(self) -> int:
        return self.sim_duration_ms // self.report_period_ms

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["band"] = self.band.value
        out["traffic_models"] = [t.value for t in self.traffic_models]
        out["mcs_thresholds_db"] = list(self.mcs_thresholds_db)
        out["mcs_spectral_eff"] = list(self.mcs_spectral_eff)
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SimConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "band" in data and not {"carrier_freq_hz", "isd_m"} <= set(data):
            return cls.for_band(data.pop("band"), **data)
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
