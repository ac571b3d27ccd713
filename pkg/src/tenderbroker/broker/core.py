"""Procurement protocol: publish, collect, evaluate, award.

All state lives in a ``BrokerState`` that changes only by applying events;
the live broker appends each event to its log and then applies it, so
replaying the log rebuilds exactly the same state.
"""
from __future__ import annotations

import enum
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

from tenderbroker.bidding import Bid, CompletionLimits, generate_bids, specified_rows
from tenderbroker.broker.events import Event, EventLog, ReplayError, as_events
from tenderbroker.broker.policy import EvaluationPolicy, EvaluationRow, evaluate
from tenderbroker.matching import AttributeSpace
from tenderbroker.model.catalog import ProviderCatalog, catalog_from_dict
from tenderbroker.model.description import (
    ModelError,
    ServiceDescription,
    description_from_dict,
    open_requirements,
    validate_description,
)
from tenderbroker.model.encoding import NO_IMPLEMENTATION, build_attribute_space, encode_tender

logger = logging.getLogger(__name__)


class BrokerError(Exception):
    pass


class NotFound(BrokerError):
    pass


class Conflict(BrokerError):
    """Duplicate identifiers, illegal state transitions and late submissions."""


class Rejected(BrokerError):
    """Malformed input; ``details`` lists what was wrong."""

    def __init__(self, msg: str, details: Iterable[str] = ()):
        super().__init__(msg)
        self.details = list(details)


class TenderStatus(str, enum.Enum):
    DRAFT = "Draft"
    PUBLISHED = "Published"
    EVALUATING = "Evaluating"
    AWARDED = "Awarded"
    FAILED = "Failed"


TRANSITIONS = frozenset(
    {
        (TenderStatus.DRAFT, TenderStatus.PUBLISHED),
        (TenderStatus.PUBLISHED, TenderStatus.EVALUATING),
        (TenderStatus.EVALUATING, TenderStatus.AWARDED),
        (TenderStatus.EVALUATING, TenderStatus.FAILED),
    }
)

MODES = ("forwarding", "local_catalog")


def parse_time(value: str | datetime) -> datetime:
    moment = value if isinstance(value, datetime) else datetime.fromisoformat(str(value).replace("Z", "+00:00"))
    return moment if moment.tzinfo is not None else moment.replace(tzinfo=timezone.utc)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Tender:
    tender_id: str
    description: ServiceDescription
    deadline: datetime
    evaluation_policy: EvaluationPolicy = EvaluationPolicy()
    status: TenderStatus = TenderStatus.DRAFT
    attribute_space: AttributeSpace | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "deadline", parse_time(self.deadline))

    def to_dict(self) -> dict:
        return {
            "tender_id": self.tender_id,
            "description": self.description.to_dict(),
            "deadline": self.deadline.isoformat(),
            "evaluation_policy": self.evaluation_policy.to_dict(),
            "status": self.status.value,
            "attribute_space": None if self.attribute_space is None else self.attribute_space.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tender":
        space = data.get("attribute_space")
        return cls(
            tender_id=data["tender_id"],
            description=description_from_dict(data["description"]),
            deadline=parse_time(data["deadline"]),
            evaluation_policy=EvaluationPolicy.from_dict(data.get("evaluation_policy")),
            status=TenderStatus(data.get("status", "Draft")),
            attribute_space=None if space is None else AttributeSpace.from_dict(space),
        )


@dataclass(frozen=True)
class SupplierRecord:
    provider_id: str
    mode: str
    catalog: ProviderCatalog | None = None
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise Rejected(f"mode must be one of {MODES}, got {self.mode!r}")
        if (self.catalog is None) == (self.endpoint is None):
            raise Rejected("a supplier record needs exactly one of catalog and endpoint")
        if self.mode == "local_catalog" and self.catalog is None:
            raise Rejected("local_catalog suppliers must supply a catalog")
        if self.mode == "forwarding" and not self.endpoint:
            raise Rejected("forwarding suppliers must supply an endpoint")
        if self.catalog is not None and self.catalog.provider_id != self.provider_id:
            raise Rejected(
                f"catalog belongs to {self.catalog.provider_id!r}, not {self.provider_id!r}"
            )

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "mode": self.mode,
            "catalog": None if self.catalog is None else self.catalog.to_dict(),
            "endpoint": self.endpoint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SupplierRecord":
        catalog = data.get("catalog")
        try:
            return cls(
                provider_id=str(data["provider_id"]),
                mode=data.get("mode") or ("local_catalog" if catalog is not None else "forwarding"),
                catalog=None if catalog is None else catalog_from_dict(catalog),
                endpoint=data.get("endpoint"),
            )
        except KeyError as exc:
            raise Rejected(f"missing field {exc.args[0]!r}") from exc
        except ModelError as exc:
            raise Rejected(f"invalid catalog: {exc}") from exc


@dataclass(frozen=True)
class AwardRecord:
    tender_id: str
    status: TenderStatus
    bid_id: str | None
    score: float | None
    declined: tuple[str, ...]
    reason: str | None = None


@dataclass
class TenderRecord:
    tender: Tender
    participants: tuple[str, ...] = ()
    generated: set[str] = field(default_factory=set)
    bids: dict[str, Bid] = field(default_factory=dict)
    closed: bool = False
    evaluation: tuple[EvaluationRow, ...] | None = None
    winner: str | None = None
    declined: frozenset[str] = frozenset()
    failure: str | None = None

    @property
    def status(self) -> TenderStatus:
        return self.tender.status


@dataclass
class BrokerState:
    suppliers: dict[str, SupplierRecord] = field(default_factory=dict)
    tenders: dict[str, TenderRecord] = field(default_factory=dict)
    last_seq: int = 0


def _transition(record: TenderRecord, new: TenderStatus) -> None:
    if (record.status, new) not in TRANSITIONS:
        raise Conflict(
            f"tender {record.tender.tender_id!r} cannot go from {record.status.value} to {new.value}"
        )
    record.tender = replace(record.tender, status=new)


def apply(state: BrokerState, event: Event) -> BrokerState:
    """Apply one event in place.  Raises ReplayError when it does not fit the state."""
    if event.seq != state.last_seq + 1:
        raise ReplayError(f"out-of-order event: seq {event.seq}, expected {state.last_seq + 1}", event.seq, 0)
    p = event.payload
    try:
        kind = event.kind
        if kind == "supplier_registered":
            record = SupplierRecord.from_dict(p["record"])
            if record.provider_id in state.suppliers:
                raise Conflict(f"duplicate supplier {record.provider_id!r}")
            state.suppliers[record.provider_id] = record
        elif kind == "tender_created":
            tender = Tender.from_dict(p["tender"])
            if tender.tender_id in state.tenders:
                raise Conflict(f"duplicate tender {tender.tender_id!r}")
            state.tenders[tender.tender_id] = TenderRecord(replace(tender, status=TenderStatus.DRAFT))
        else:
            record = state.tenders[p["tender_id"]]
            if kind == "tender_published":
                _transition(record, TenderStatus.PUBLISHED)
                record.tender = replace(
                    record.tender, attribute_space=AttributeSpace.from_dict(p["attribute_space"])
                )
                record.participants = tuple(p["participants"])
            elif kind == "bids_generated":
                record.generated.add(p["provider_id"])
                for data in p["bids"]:
                    bid = Bid.from_dict(data)
                    record.bids[bid.bid_id] = bid
            elif kind == "bid_submitted":
                bid = Bid.from_dict(p["bid"])
                record.bids[bid.bid_id] = bid
            elif kind == "tender_closed":
                record.closed = True
            elif kind == "tender_evaluated":
                _transition(record, TenderStatus.EVALUATING)
                record.evaluation = tuple(EvaluationRow.from_dict(r) for r in p["table"])
            elif kind == "tender_awarded":
                _transition(record, TenderStatus.AWARDED)
                record.winner = p["bid_id"]
                record.declined = frozenset(p["declined"])
            elif kind == "tender_failed":
                _transition(record, TenderStatus.FAILED)
                record.declined = frozenset(p["declined"])
                record.failure = p["reason"]
            else:
                raise ReplayError(f"unknown event kind {kind!r}", event.seq, 0)
    except ReplayError:
        raise
    except (KeyError, TypeError, ValueError, BrokerError) as exc:
        raise ReplayError(f"event {event.kind!r} does not apply: {exc}", event.seq, 0) from exc
    state.last_seq = event.seq
    return state


def replay_log(log) -> BrokerState:
    """Rebuild broker state from an event log (path, bytes or event sequence)."""
    state = BrokerState()
    for event in as_events(log):
        apply(state, event)
    return state


Forwarder = Callable[[str, Tender], None]


def _no_forwarding(endpoint: str, tender: Tender) -> None:
    logger.info("forwarding of %s to %s skipped: no forwarder configured", tender.tender_id, endpoint)


class Broker:
    """Single-writer broker.  Every mutation runs under one lock and in log order."""

    def __init__(
        self,
        log: EventLog | None = None,
        clock: Callable[[], datetime] = utc_now,
        forwarder: Forwarder = _no_forwarding,
        limits: CompletionLimits = CompletionLimits(),
        workers: int = 1,
    ):
        self.log = log if log is not None else EventLog()
        self.clock = clock
        self.forwarder = forwarder
        self.limits = limits
        self.workers = workers
        self._lock = threading.RLock()
        self.state = replay_log(self.log.events)

    @classmethod
    def open(cls, path: str | Path, fsync: bool = False, **kwargs) -> "Broker":
        """Broker backed by a log file, recovering any state already recorded there."""
        return cls(EventLog(path, fsync=fsync), **kwargs)

    # -- internals ---------------------------------------------------------

    def _emit(self, kind: str, payload: dict) -> Event:
        event = self.log.append(kind, payload, self.clock().isoformat())
        apply(self.state, event)
        return event

    def _record(self, tender_id: str) -> TenderRecord:
        try:
            return self.state.tenders[tender_id]
        except KeyError:
            raise NotFound(f"unknown tender {tender_id!r}") from None

    def _require(self, record: TenderRecord, *statuses: TenderStatus) -> None:
        if record.status not in statuses:
            wanted = " or ".join(s.value for s in statuses)
            raise Conflict(f"tender {record.tender.tender_id!r} is {record.status.value}, not {wanted}")

    def _past_deadline(self, record: TenderRecord) -> bool:
        return record.closed or self.clock() >= record.tender.deadline

    def _generate_local(self, record: TenderRecord) -> None:
        pending = [
            self.state.suppliers[p] for p in record.participants
            if p not in record.generated and self.state.suppliers[p].catalog is not None
        ]
        if not pending:
            return
        tender, space = record.tender, record.tender.attribute_space

        def run(supplier: SupplierRecord) -> list[Bid]:
            return generate_bids(tender, supplier.catalog, space, self.limits)

        if self.workers > 1 and len(pending) > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(run, pending))
        else:
            results = [run(s) for s in pending]
        for supplier, bids in zip(pending, results):
            self._emit(
                "bids_generated",
                {"tender_id": tender.tender_id, "provider_id": supplier.provider_id,
                 "bids": [b.to_dict() for b in bids]},
            )

    # -- operations --------------------------------------------------------

    def register_supplier(self, record: SupplierRecord) -> str:
        with self._lock:
            if record.provider_id in self.state.suppliers:
                raise Conflict(f"duplicate supplier {record.provider_id!r}")
            self._emit("supplier_registered", {"record": record.to_dict()})
            return record.provider_id

    def create_tender(self, tender: Tender) -> str:
        """Record a Draft tender."""
        with self._lock:
            if tender.tender_id in self.state.tenders:
                raise Conflict(f"duplicate tender {tender.tender_id!r}")
            if tender.status is not TenderStatus.DRAFT:
                raise Conflict("new tenders must be Draft")
            try:
                validate_description(tender.description)
            except ModelError as exc:
                raise Rejected(f"invalid description: {exc}") from exc
            self._emit("tender_created", {"tender": replace(tender, attribute_space=None).to_dict()})
            return tender.tender_id

    def publish_tender(self, tender: Tender | str) -> str:
        """Publish a Draft tender, given as a new Tender or the id of a recorded draft.

        The attribute space is frozen from the local catalogs registered now,
        and the tender is forwarded to every forwarding supplier.
        """
        with self._lock:
            if isinstance(tender, Tender):
                self.create_tender(tender)
                tender_id = tender.tender_id
            else:
                tender_id = tender
            record = self._record(tender_id)
            self._require(record, TenderStatus.DRAFT)
            suppliers = sorted(self.state.suppliers.values(), key=lambda s: s.provider_id)
            catalogs = [s.catalog for s in suppliers if s.catalog is not None]
            try:
                space = build_attribute_space(record.tender.description, catalogs)
                encode_tender(record.tender.description, space, tender_id)
            except ModelError as exc:
                raise Rejected(f"cannot encode tender: {exc}") from exc
            self._emit(
                "tender_published",
                {"tender_id": tender_id, "attribute_space": space.to_dict(),
                 "participants": [s.provider_id for s in suppliers]},
            )
            published = record.tender
        for supplier in suppliers:
            if supplier.endpoint is not None:
                try:
                    self.forwarder(supplier.endpoint, published)
                except Exception:  # a dead supplier must not block publication
                    logger.exception("forwarding %s to %s failed", tender_id, supplier.endpoint)
        return tender_id

    def collect_bids(self, tender_id: str) -> list[Bid]:
        with self._lock:
            record = self._record(tender_id)
            self._require(record, TenderStatus.PUBLISHED)
            if self._past_deadline(record):
                raise Conflict(f"tender {tender_id!r} is past its deadline")
            self._generate_local(record)
            return list(record.bids.values())

    def submit_bid(self, tender_id: str, bid: Bid) -> str:
        with self._lock:
            record = self._record(tender_id)
            self._require(record, TenderStatus.PUBLISHED)
            if self._past_deadline(record):
                raise Conflict(f"late submission: tender {tender_id!r} is past its deadline")
            if bid.bid_id in record.bids:
                raise Conflict(f"duplicate bid {bid.bid_id!r}")
            problems = check_submission(record.tender, bid)
            if problems:
                raise Rejected(f"bid {bid.bid_id!r} rejected", problems)
            self._emit("bid_submitted", {"tender_id": tender_id, "bid": bid.to_dict()})
            return bid.bid_id

    def close_tender(self, tender_id: str) -> None:
        """End bidding now: local bids are generated and further submissions are late."""
        with self._lock:
            record = self._record(tender_id)
            self._require(record, TenderStatus.PUBLISHED)
            if record.closed:
                return
            self._generate_local(record)
            self._emit("tender_closed", {"tender_id": tender_id})

    def evaluate_bids(self, tender_id: str) -> list[EvaluationRow]:
        with self._lock:
            record = self._record(tender_id)
            if record.status in (TenderStatus.EVALUATING, TenderStatus.AWARDED, TenderStatus.FAILED):
                return list(record.evaluation)
            self._require(record, TenderStatus.PUBLISHED)
            if not self._past_deadline(record):
                raise Conflict(f"tender {tender_id!r} is still open for bids")
            self._generate_local(record)
            table = evaluate(record.bids.values(), record.tender.evaluation_policy)
            self._emit("tender_evaluated", {"tender_id": tender_id, "table": [r.to_dict() for r in table]})
            return table

    def award(self, tender_id: str, bid_id: str | None = None) -> AwardRecord:
        """Award ``bid_id``, or with no bid_id apply the policy's automatic rule.

        Automatic award takes the top-ranked bid if its score reaches the
        threshold (any score when there is none); otherwise the tender fails.
        """
        with self._lock:
            record = self._record(tender_id)
            self._require(record, TenderStatus.EVALUATING)
            table = list(record.evaluation)
            ids = [r.bid_id for r in table]
            if bid_id is not None:
                if bid_id not in ids:
                    raise NotFound(f"bid {bid_id!r} is not in the evaluation of {tender_id!r}")
                chosen = table[ids.index(bid_id)]
            else:
                threshold = record.tender.evaluation_policy.auto_award_threshold
                chosen = table[0] if table else None
                if chosen is not None and threshold is not None and chosen.score < threshold:
                    chosen = None
            if chosen is None:
                reason = "no bids" if not table else "no bid meets the award threshold"
                self._emit("tender_failed", {"tender_id": tender_id, "reason": reason, "declined": ids})
                return AwardRecord(tender_id, TenderStatus.FAILED, None, None, tuple(ids), reason)
            declined = [i for i in ids if i != chosen.bid_id]
            self._emit(
                "tender_awarded",
                {"tender_id": tender_id, "bid_id": chosen.bid_id, "score": chosen.score, "declined": declined},
            )
            return AwardRecord(tender_id, TenderStatus.AWARDED, chosen.bid_id, chosen.score, tuple(declined))

    # -- reads ---------------------------------------------------------------

    def tender(self, tender_id: str) -> Tender:
        with self._lock:
            return self._record(tender_id).tender

    def bids(self, tender_id: str) -> list[Bid]:
        with self._lock:
            return list(self._record(tender_id).bids.values())

    def evaluation(self, tender_id: str) -> list[EvaluationRow] | None:
        with self._lock:
            rows = self._record(tender_id).evaluation
            return None if rows is None else list(rows)


def check_submission(tender: Tender, bid: Bid) -> list[str]:
    """Structural checks for a supplier-built bid; prices are taken as given."""
    if bid.tender_id != tender.tender_id:
        return [f"bid is for tender {bid.tender_id!r}, not {tender.tender_id!r}"]
    desc = bid.candidate.description
    try:
        validate_description(desc)
    except ModelError as exc:
        return [f"invalid description: {exc}"]
    problems = [f"open requirement {node}.{req}" for node, req in open_requirements(desc)]
    by_id = {t.id: t for t in desc.templates}
    for t in tender.description.templates:
        got = by_id.get(t.id)
        if got is None:
            problems.append(f"template {t.id!r} of the tender is missing")
        elif got.type != t.type:
            problems.append(f"template {t.id!r} changed type from {t.type!r} to {got.type!r}")
        elif t.implementation and got.implementation != t.implementation:
            problems.append(f"template {t.id!r} must keep implementation {t.implementation!r}")

    space = tender.attribute_space
    attrs = {a.name: a for a in space.attributes}
    wanted = specified_rows(space, encode_tender(tender.description, space, tender.tender_id))
    for t in desc.templates:
        if t.implementation is None:
            continue
        attr = attrs.get(t.type)
        if attr is None:
            problems.append(f"{t.id}: node type {t.type!r} is outside the tender's attribute space")
        elif attr.realizations != (NO_IMPLEMENTATION,) and t.implementation not in attr.realizations:
            problems.append(f"{t.id}: {t.implementation!r} is not a realization of {t.type!r}")
        elif t.type in wanted and t.implementation not in wanted[t.type]:
            problems.append(f"{t.id}: {t.implementation!r} is not accepted for {t.type!r}")
    return problems
