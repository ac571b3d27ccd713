"""HTTP interface to a Broker."""
from __future__ import annotations

import json
import logging

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from tenderbroker.bidding import Bid
from tenderbroker.broker.core import (
    AwardRecord,
    Broker,
    BrokerError,
    Conflict,
    NotFound,
    Rejected,
    SupplierRecord,
    Tender,
    TenderStatus,
)
from tenderbroker.broker.policy import PolicyError
from tenderbroker.model.description import ModelError

logger = logging.getLogger(__name__)

_STATUS = {NotFound: 404, Conflict: 409, Rejected: 422}


class HttpForwarder:
    """Posts published tenders to supplier endpoints."""

    def __init__(self, timeout: float = 5.0, client: httpx.Client | None = None):
        self.client = client or httpx.Client(timeout=timeout)

    def __call__(self, endpoint: str, tender: Tender) -> None:
        body = {**tender.to_dict(), "submit_to": f"/tenders/{tender.tender_id}/bids"}
        self.client.post(endpoint, json=body).raise_for_status()


def _error(exc: Exception) -> JSONResponse:
    code = next((c for kind, c in _STATUS.items() if isinstance(exc, kind)), 422)
    body = {"error": type(exc).__name__, "detail": str(exc)}
    if isinstance(exc, Rejected) and exc.details:
        body["problems"] = exc.details
    return JSONResponse(body, status_code=code)


def _award_dict(record: AwardRecord) -> dict:
    return {
        "tender_id": record.tender_id,
        "status": record.status.value,
        "bid_id": record.bid_id,
        "score": record.score,
        "declined": list(record.declined),
        "reason": record.reason,
    }


async def _body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise Rejected(f"request body is not JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise Rejected("request body must be a JSON object")
    return data


def create_app(broker: Broker) -> FastAPI:
    app = FastAPI(title="tenderbroker")

    @app.exception_handler(BrokerError)
    async def broker_error(request: Request, exc: BrokerError):
        return _error(exc)

    @app.exception_handler(ModelError)
    async def model_error(request: Request, exc: ModelError):
        return _error(Rejected(str(exc)))

    @app.exception_handler(PolicyError)
    async def policy_error(request: Request, exc: PolicyError):
        return _error(Rejected(str(exc)))

    @app.post("/suppliers", status_code=201)
    async def register_supplier(request: Request):
        record = SupplierRecord.from_dict(await _body(request))
        return {"provider_id": broker.register_supplier(record)}

    @app.post("/tenders", status_code=201)
    async def create_tender(request: Request):
        data = await _body(request)
        try:
            tender = Tender.from_dict({**data, "status": "Draft", "attribute_space": None})
        except (KeyError, TypeError, ValueError) as exc:
            raise Rejected(f"malformed tender: {exc}") from exc
        return {"tender_id": broker.create_tender(tender), "status": TenderStatus.DRAFT.value}

    @app.get("/tenders/{tender_id}")
    def get_tender(tender_id: str):
        return broker.tender(tender_id).to_dict()

    @app.post("/tenders/{tender_id}/publish")
    def publish(tender_id: str):
        broker.publish_tender(tender_id)
        return broker.tender(tender_id).to_dict()

    @app.post("/tenders/{tender_id}/bids", status_code=201)
    async def submit_bid(tender_id: str, request: Request):
        data = await _body(request)
        try:
            bid = Bid.from_dict({"tender_id": tender_id, **data})
        except (KeyError, TypeError, ValueError, ArithmeticError) as exc:
            raise Rejected(f"malformed bid: {exc}") from exc
        return {"bid_id": broker.submit_bid(tender_id, bid)}

    @app.get("/tenders/{tender_id}/bids")
    def list_bids(tender_id: str):
        tender = broker.tender(tender_id)
        try:
            bids = broker.collect_bids(tender_id)
        except Conflict:
            if tender.status is TenderStatus.DRAFT:
                raise
            bids = broker.bids(tender_id)
        return [b.to_dict() for b in bids]

    @app.post("/tenders/{tender_id}/close")
    def close(tender_id: str):
        broker.close_tender(tender_id)
        return {"tender_id": tender_id, "closed": True}

    @app.get("/tenders/{tender_id}/evaluation")
    def evaluation(tender_id: str):
        return [r.to_dict() for r in broker.evaluate_bids(tender_id)]

    @app.post("/tenders/{tender_id}/award")
    async def award(tender_id: str, request: Request):
        data = await _body(request)
        return _award_dict(broker.award(tender_id, data.get("bid_id")))

    return app
