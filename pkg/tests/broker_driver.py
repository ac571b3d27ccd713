"""Random API call sequences against a Broker, checking every status change."""
import random
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from functools import lru_cache

from tenderbroker import fixtures
from tenderbroker.bidding import Bid, CompletionCandidate
from tenderbroker.broker import (
    TRANSITIONS,
    Broker,
    BrokerError,
    EvaluationPolicy,
    SupplierRecord,
    Tender,
    replay_log,
)
from tenderbroker.broker.policy import Criterion
from tenderbroker.model import parse_catalog, parse_description

T0 = datetime(2026, 1, 1, tzinfo=timezone.utc)


class FakeClock:
    def __init__(self, start=T0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += timedelta(seconds=seconds)


@lru_cache(maxsize=None)
def catalogs():
    return {name: parse_catalog(fixtures.read(name))
            for name in ("catalog-dual-mode", "catalog-vm-only", "catalog-gpu", "example-catalog")}


@lru_cache(maxsize=None)
def descriptions():
    return {name: parse_description(fixtures.read(name))
            for name in ("sugarcrm-partial", "sugarcrm-full", "example-tender")}


@lru_cache(maxsize=None)
def rds_description():
    return parse_description(fixtures.read("sugarcrm-rds-bid"))


POLICIES = (
    EvaluationPolicy(),
    EvaluationPolicy(auto_award_threshold=0.9),
    EvaluationPolicy((Criterion("price", "minimize", 0.5), Criterion("managed_services", "maximize", 0.5))),
    EvaluationPolicy(auto_award_threshold=2.0),
)


class IllegalTransition(AssertionError):
    pass


class Driver:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.clock = FakeClock()
        self.forwarded = []
        self.broker = Broker(clock=self.clock, forwarder=lambda ep, t: self.forwarded.append((ep, t.tender_id)))
        self.calls = 0
        self.transitions = []

    def statuses(self):
        return {tid: rec.status for tid, rec in self.broker.state.tenders.items()}

    def pick_tender(self):
        known = sorted(self.broker.state.tenders)
        if known and self.rng.random() < 0.9:
            return self.rng.choice(known)
        return f"t{self.rng.randrange(6)}"

    # One API call, chosen at random.
    def step(self):
        rng, b = self.rng, self.broker
        action = rng.choice(
            ["register_local", "register_forwarding", "create", "publish", "publish_new", "collect", "submit",
             "close", "advance", "evaluate", "award", "award_auto"]
        )
        if action == "register_local":
            name = rng.choice(sorted(catalogs()))
            catalog = catalogs()[name]
            b.register_supplier(SupplierRecord(catalog.provider_id, "local_catalog", catalog=catalog))
        elif action == "register_forwarding":
            pid = f"fw{rng.randrange(3)}"
            b.register_supplier(SupplierRecord(pid, "forwarding", endpoint=f"http://{pid}.example/tenders"))
        elif action in ("create", "publish_new"):
            tender = Tender(f"t{rng.randrange(6)}", descriptions()[rng.choice(sorted(descriptions()))],
                            self.clock.now + timedelta(seconds=rng.randrange(1, 100)), rng.choice(POLICIES))
            (b.create_tender if action == "create" else b.publish_tender)(tender)
        elif action == "publish":
            b.publish_tender(self.pick_tender())
        elif action == "collect":
            b.collect_bids(self.pick_tender())
        elif action == "submit":
            tid = self.pick_tender()
            desc = rds_description() if rng.random() < 0.7 else descriptions()["sugarcrm-partial"]
            price = Decimal(rng.randrange(0, 100)) / 100
            bid = Bid(f"{tid}/fw/{rng.randrange(4)}", tid, "fw0", CompletionCandidate(desc), price,
                      {"price": str(price), "managed_services": "true"})
            b.submit_bid(tid, bid)
        elif action == "close":
            b.close_tender(self.pick_tender())
        elif action == "advance":
            self.clock.advance(rng.randrange(1, 60))
        elif action == "evaluate":
            b.evaluate_bids(self.pick_tender())
        elif action == "award":
            tid = self.pick_tender()
            rows = b.state.tenders[tid].evaluation if tid in b.state.tenders else None
            choices = [r.bid_id for r in rows or ()] + ["no-such-bid"]
            b.award(tid, rng.choice(choices))
        elif action == "award_auto":
            b.award(self.pick_tender())

    def run(self, length: int):
        for _ in range(length):
            before = self.statuses()
            try:
                self.step()
            except BrokerError:
                pass
            self.calls += 1
            after = self.statuses()
            for tid, status in after.items():
                old = before.get(tid)
                if old is not None and old != status:
                    if (old, status) not in TRANSITIONS:
                        raise IllegalTransition(f"{tid}: {old.value} -> {status.value}")
                    self.transitions.append((old, status))
            self.check_awards()
        return self

    def check_awards(self):
        for tid, rec in self.broker.state.tenders.items():
            if rec.status.value == "Awarded":
                assert rec.winner is not None and rec.winner not in rec.declined
                assert rec.declined == {r.bid_id for r in rec.evaluation} - {rec.winner}
            else:
                assert rec.winner is None

    def replay_matches(self) -> bool:
        return replay_log(self.broker.log.to_bytes()) == self.broker.state
