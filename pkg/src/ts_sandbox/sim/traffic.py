"""Downlink traffic sources: MBR-capped full buffer and exponential on/off bursts."""

from __future__ import annotations

import numpy as np

from .config import TRAFFIC_RATE_BPS, TrafficModel


class TrafficSource:
    """Arrival process for one UE.

    Bursty sources alternate exponentially distributed ON/OFF phases and emit
    at ``rate * (on + off) / on`` while ON, so the long-run mean equals the
    nominal rate. Full-buffer sources always offer ``rate * dt``.
    """

    def __init__(self, model: TrafficModel, rng: np.random.Generator,
                 on_mean_ms: float = 200.0, off_mean_ms: float = 200.0):
        self.model = TrafficModel(model)
        self.rate_bps = TRAFFIC_RATE_BPS[self.model]
        self.full_buffer = self.model is TrafficModel.FULL_BUFFER_20M
        self.on_mean_ms = on_mean_ms
        self.off_mean_ms = off_mean_ms
        self.peak_bps = self.rate_bps * (on_mean_ms + off_mean_ms) / on_mean_ms
        self._rng = rng
        if self.full_buffer:
            self.on, self.phase_left_ms = True, float("inf")
        else:
            # stationary start: phase chosen by its duty cycle, residual time is memoryless
            self.on = bool(rng.random() < on_mean_ms / (on_mean_ms + off_mean_ms))
            self.phase_left_ms = rng.exponential(on_mean_ms if self.on else off_mean_ms)

    def arrivals_bits(self, dt_ms: float) -> float:
        if self.full_buffer:
            return self.rate_bps * dt_ms / 1000.0
        on_time = 0.0
        left = dt_ms
        while left > 0:
            span = min(left, self.phase_left_ms)
            if self.on:
                on_time += span
            left -= span
            self.phase_left_ms -= span
            if self.phase_left_ms <= 0:
                self.on = not self.on
                self.phase_left_ms = self._rng.exponential(
                    self.on_mean_ms if self.on else self.off_mean_ms
                )
        return self.peak_bps * on_time / 1000.0

    def state(self) -> tuple:
        return (self.on, self.phase_left_ms)
