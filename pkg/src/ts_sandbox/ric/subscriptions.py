"""xApp subscription management with upstream de-duplication."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class SubscriptionOutcome(str, enum.Enum):
    FORWARDED = "forwarded"
    DEDUPLICATED = "deduplicated"
    REJECTED = "rejected"


@dataclass(frozen=True)
class Subscription:
    xapp_id: str
    node_id: int
    report_period_ms: int
    kpm_names: tuple[str, ...]

    @property
    def key(self) -> tuple[int, int, frozenset[str]]:
        return (self.node_id, self.report_period_ms, frozenset(self.kpm_names))


@dataclass
class SubscriptionRegistry:
    """Tracks xApp subscriptions; at most one upstream stream per (node, KPM set)."""

    known_nodes: set[int] = field(default_factory=set)
    upstream: dict[tuple, Subscription] = field(default_factory=dict)
    subscribers: dict[tuple, list[str]] = field(default_factory=dict)
    acked: set[int] = field(default_factory=set)

    def register_node(self, node_id: int) -> None:
        self.known_nodes.add(node_id)

    def handle_subscription(self, req: Subscription) -> SubscriptionOutcome:
        if req.node_id not in self.known_nodes:
            return SubscriptionOutcome.REJECTED
        key = req.key
        if key in self.upstream:
            if req.xapp_id not in self.subscribers[key]:
                self.subscribers[key].append(req.xapp_id)
            return SubscriptionOutcome.DEDUPLICATED
        self.upstream[key] = req
        self.subscribers[key] = [req.xapp_id]
        return SubscriptionOutcome.FORWARDED

    def active_nodes(self) -> set[int]:
        return {k[0] for k in self.upstream}

    def xapps_for(self, node_id: int) -> list[str]:
        out: list[str] = []
        for key, subs in self.subscribers.items():
            if key[0] == node_id:
                out.extend(s for s in subs if s not in out)
        return out


def handle_subscription(req: Subscription, registry: SubscriptionRegistry) -> SubscriptionOutcome:
    return registry.handle_subscription(req)
