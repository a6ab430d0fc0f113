"""Near-RT RIC: subscription management, ETL and policy dispatch."""

from .etl import EtlStats, KpmHistory, aggregate_ue_record, ho_cost
from .records import CELL_FEATURES, CellFeatures, UeStateRecord, record_columns
from .service import DEFAULT_KPM_NAMES, DispatchStats, RicService, dispatch
from .subscriptions import (
    Subscription, SubscriptionOutcome, SubscriptionRegistry, handle_subscription,
)
