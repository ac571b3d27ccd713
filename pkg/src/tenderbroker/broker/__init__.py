"""Tender brokerage service: publication, bid collection, evaluation and award."""
from tenderbroker.broker.config import BrokerConfig, ConfigError, load_config
from tenderbroker.broker.core import (
    TRANSITIONS,
    AwardRecord,
    Broker,
    BrokerError,
    BrokerState,
    Conflict,
    NotFound,
    Rejected,
    SupplierRecord,
    Tender,
    TenderRecord,
    TenderStatus,
    apply,
    check_submission,
    replay_log,
)
from tenderbroker.broker.events import Event, EventLog, ReplayError, read_events
from tenderbroker.broker.policy import (
    Criterion,
    EvaluationPolicy,
    EvaluationRow,
    PolicyError,
    evaluate,
    render_table,
)

__all__ = [
    "TRANSITIONS",
    "AwardRecord",
    "Broker",
    "BrokerConfig",
    "BrokerError",
    "BrokerState",
    "ConfigError",
    "Conflict",
    "Criterion",
    "EvaluationPolicy",
    "EvaluationRow",
    "Event",
    "EventLog",
    "NotFound",
    "PolicyError",
    "Rejected",
    "ReplayError",
    "SupplierRecord",
    "Tender",
    "TenderRecord",
    "TenderStatus",
    "apply",
    "check_submission",
    "evaluate",
    "load_config",
    "read_events",
    "render_table",
    "replay_log",
]
