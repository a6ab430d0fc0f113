"""Near-RT RIC core: E2 termination, subscriptions, ETL and policy dispatch.

The service is transport-agnostic: transports hand it decoded messages per
connection and send back whatever it returns. It is not thread-safe; the TCP
server serialises calls with a lock.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from ..e2lite import (
    AckStatus, ControlAck, E2Message, KpmIndication, RicControl, SubscriptionAck,
    SubscriptionRequest,
)
from ..sim.world import KpmReport
from .etl import DELTA, K0, EtlStats, KpmHistory, aggregate_ue_record
from .records import UeStateRecord
from .subscriptions import Subscription, SubscriptionOutcome, SubscriptionRegistry

log = logging.getLogger("ts_sandbox.ric")

DEFAULT_KPM_NAMES = (
    "DRB.UEThpDl",
    "RRU.PrbUsedDl",
    "DRB.MeanActiveUeDl",
    "TB.TotNbrDl",
    "TB.TotNbrDlQpsk",
    "TB.TotNbrDl16Qam",
    "TB.TotNbrDl64Qam",
    "L3.ServNbrSinr",
)


def log_event(event: str, **fields) -> None:
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps({"event": event, **fields}, sort_keys=True))


@dataclass
class DispatchStats:
    dispatched: int = 0
    controls: int = 0
    policy_failures: int = 0
    isolation_drops: int = 0
    latencies_s: list[float] = field(default_factory=list)

    @property
    def max_latency_s(self) -> float:
        return max(self.latencies_s, default=0.0)


def dispatch(record: UeStateRecord, policy, stats: DispatchStats | None = None
             ) -> tuple[RicControl | None, int]:
    """Consult ``policy`` once; returns (control or None, chosen target cell)."""
    stats = stats if stats is not None else DispatchStats()
    stats.dispatched += 1
    try:
        decision = policy.decide(record)
        target = int(decision.target_cell_id)
        if target not in record.cell_ids:
            raise ValueError(f"target {target} not among the record's cells")
    except Exception as exc:  # a faulty policy must not stall the pipeline
        stats.policy_failures += 1
        log.warning(json.dumps({"event": "policy_failure", "ue_id": record.ue_id,
                                "error": repr(exc)}))
        return None, record.serving_cell_id
    if target == record.serving_cell_id:
        return None, target
    stats.controls += 1
    return RicControl(record.ue_id, target), target


RecordSink = Callable[[UeStateRecord, int], None]


class RicService:
    def __init__(
        self,
        policy,
        nr_cell_ids: Iterable[int],
        *,
        epsilon_ms: int = 300,
        period_ms: int = 100,
        kpm_names: tuple[str, ...] = DEFAULT_KPM_NAMES,
        k0: float = K0,
        delta: float = DELTA,
        record_sink: RecordSink | None = None,
    ):
        self.policy = policy
        self.nr_cell_ids = sorted(nr_cell_ids)
        self.epsilon_ms = epsilon_ms
        self.period_ms = period_ms
        self.kpm_names = tuple(kpm_names)
        self.k0 = k0
        self.delta = delta
        self.record_sink = record_sink
        self.registry = SubscriptionRegistry()
        self.history = KpmHistory()
        self.etl_stats = EtlStats()
        self.stats = DispatchStats()
        self.ho_ledger: dict[int, int] = {}
        self._pending_subs: list[Subscription] = []
        self._windows: dict[int, dict[int, KpmReport]] = {}
        self._issued: dict[tuple[int, int], int] = {}
        self.wire_subscriptions = 0

    # -- subscriptions ------------------------------------------------------------

    def subscribe(self, xapp_id: str, node_id: int, report_period_ms: int | None = None,
                  kpm_names: tuple[str, ...] | None = None
                  ) -> tuple[SubscriptionOutcome, list[tuple[int, E2Message]]]:
        sub = Subscription(xapp_id, node_id, report_period_ms or self.period_ms,
                           tuple(kpm_names or self.kpm_names))
        outcome = self.registry.handle_subscription(sub)
        log_event("subscription", xapp_id=xapp_id, node_id=node_id, outcome=outcome.value)
        if outcome is SubscriptionOutcome.FORWARDED:
            self.wire_subscriptions += 1
            msg = E2Message(node_id, 0, SubscriptionRequest(sub.report_period_ms, sub.kpm_names))
            return outcome, [(node_id, msg)]
        return outcome, []

    def request_subscription(self, xapp_id: str, node_id: int) -> list[tuple[int, E2Message]]:
        """Subscribe now if the node is connected, otherwise when it connects."""
        if node_id in self.registry.known_nodes:
            return self.subscribe(xapp_id, node_id)[1]
        self._pending_subs.append(Subscription(xapp_id, node_id, self.period_ms, self.kpm_names))
        return []

    def connect(self, node_id: int) -> list[tuple[int, E2Message]]:
        self.registry.register_node(node_id)
        log_event("node_connected", node_id=node_id)
        out = []
        for sub in [s for s in self._pending_subs if s.node_id == node_id]:
            self._pending_subs.remove(sub)
            out.extend(self.subscribe(sub.xapp_id, sub.node_id, sub.report_period_ms,
                                      sub.kpm_names)[1])
        return out

    # -- message handling --------------------------------------------------------

    def handle(self, conn_node_id: int, msg: E2Message) -> list[tuple[int, E2Message]]:
        if msg.node_id != conn_node_id:
            self.stats.isolation_drops += 1
            log_event("isolation_drop", connection=conn_node_id, claimed=msg.node_id)
            return []
        p = msg.payload
        if isinstance(p, SubscriptionAck):
            self.registry.acked.add(msg.node_id)
            return []
        if isinstance(p, ControlAck):
            issued = self._issued.pop((p.ue_id, p.cell_id), None)
            if p.status is AckStatus.EXECUTED and issued is not None:
                self.ho_ledger[p.ue_id] = issued
            return []
        if isinstance(p, KpmIndication):
            return self._on_indication(msg)
        log_event("unexpected_message", node_id=msg.node_id, msg_type=int(msg.msg_type))
        return []

    def _on_indication(self, msg: E2Message) -> list[tuple[int, E2Message]]:
        t0 = time.perf_counter()
        key = msg.timestamp_ms
        window = self._windows.setdefault(key, {})
        window[msg.node_id] = msg.payload.report
        expected = self.registry.acked & self.registry.active_nodes()
        if not expected <= set(window):
            return []
        del self._windows[key]
        out = self.process_window(window, key)
        self.stats.latencies_s.append(time.perf_counter() - t0)
        return out

    def process_window(self, window: dict[int, KpmReport], timestamp_ms: int
                       ) -> list[tuple[int, E2Message]]:
        """ETL join + dispatch for one complete window; returns controls and barriers."""
        window_end = max(r.window_end_ms for r in window.values())
        ues = set(self.history.known_ues())
        for rep in window.values():
            ues.update(u.ue_id for u in rep.ue_level)
        out: list[tuple[int, E2Message]] = []
        for ue_id in sorted(ues):
            rec = aggregate_ue_record(
                window, ue_id, self.history, self.epsilon_ms,
                window_end_ms=window_end, nr_cell_ids=self.nr_cell_ids,
                last_ho_ms=self.ho_ledger.get(ue_id), period_ms=self.period_ms,
                k0=self.k0, delta=self.delta, stats=self.etl_stats,
            )
            if rec is None:
                log_event("record_dropped", ue_id=ue_id, window_end_ms=window_end)
                continue
            control, target = dispatch(rec, self.policy, self.stats)
            if self.record_sink is not None:
                self.record_sink(rec, target)
            if control is not None:
                self._issued[(control.ue_id, control.target_cell_id)] = window_end
                out.append((rec.serving_cell_id, E2Message(rec.serving_cell_id, timestamp_ms,
                                                           control)))
                if log.isEnabledFor(logging.DEBUG):
                    log.debug(json.dumps({"event": "control", "ue_id": rec.ue_id,
                                          "from": rec.serving_cell_id, "to": target,
                                          "window_end_ms": window_end}))
        for rep in window.values():
            self.history.ingest(rep)
        for node_id in sorted(window):
            out.append((node_id, E2Message(node_id, timestamp_ms,
                                           ControlAck(0, 0, AckStatus.WINDOW_DONE))))
        return out
