"""Bid evaluation: weighted sum of min-max normalized summary criteria."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping

from tenderbroker.bidding import Bid

DIRECTIONS = ("minimize", "maximize")


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class Criterion:
    key: str
    direction: str = "minimize"
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.direction not in DIRECTIONS:
            raise PolicyError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if not (isinstance(self.weight, (int, float)) and math.isfinite(self.weight) and self.weight >= 0):
            raise PolicyError(f"weight of {self.key!r} must be a non-negative number")


LOWEST_PRICE = (Criterion("price", "minimize", 1.0),)


@dataclass(frozen=True)
class EvaluationPolicy:
    """Ordered criteria over bid summary keys; no criteria means lowest price."""

    criteria: tuple[Criterion, ...] = ()
    auto_award_threshold: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "criteria", tuple(self.criteria))
        if self.criteria and not math.isclose(math.fsum(c.weight for c in self.criteria), 1.0, abs_tol=1e-9):
            raise PolicyError("criterion weights must sum to 1")
        keys = [c.key for c in self.criteria]
        if len(set(keys)) != len(keys):
            raise PolicyError("criteria keys must be distinct")

    @property
    def effective_criteria(self) -> tuple[Criterion, ...]:
        return self.criteria or LOWEST_PRICE

    def to_dict(self) -> dict:
        return {
            "criteria": [[c.key, c.direction, c.weight] for c in self.criteria],
            "auto_award_threshold": self.auto_award_threshold,
        }

    @classmethod
    def from_dict(cls, data: Mapping | None) -> "EvaluationPolicy":
        data = dict(data or {})
        unknown = set(data) - {"criteria", "auto_award_threshold"}
        if unknown:
            raise PolicyError(f"unknown policy keys: {sorted(unknown)}")
        criteria = []
        for item in data.get("criteria") or ():
            if isinstance(item, Mapping):
                criteria.append(Criterion(item["key"], item.get("direction", "minimize"), item.get("weight", 1.0)))
            else:
                criteria.append(Criterion(*item))
        threshold = data.get("auto_award_threshold")
        return cls(tuple(criteria), None if threshold is None else float(threshold))


@dataclass(frozen=True)
class EvaluationRow:
    bid_id: str
    provider_id: str
    score: float
    price: Decimal
    summary: Mapping[str, str]

    def to_dict(self) -> dict:
        return {
            "bid_id": self.bid_id,
            "provider_id": self.provider_id,
            "score": self.score,
            "price": str(self.price),
            "summary": dict(sorted(self.summary.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvaluationRow":
        return cls(data["bid_id"], data["provider_id"], float(data["score"]),
                   Decimal(data["price"]), dict(data["summary"]))


def _numeric(value) -> float | None:
    if value is None:
        return None
    text = str(value).strip().lower()
    if text in ("true", "false"):
        return 1.0 if text == "true" else 0.0
    try:
        number = float(text)
    except ValueError:
        return None
    return number if math.isfinite(number) else None


def _normalized(values: list[float | None], direction: str) -> list[float]:
    known = [v for v in values if v is not None]
    if not known:
        return [0.0] * len(values)
    lo, hi = min(known), max(known)
    out = []
    for v in values:
        if v is None:
            out.append(0.0)  # missing or non-numeric: worst
        elif hi == lo:
            out.append(1.0)
        else:
            x = (v - lo) / (hi - lo)
            out.append(1.0 - x if direction == "minimize" else x)
    return out


def evaluate(bids: Iterable[Bid], policy: EvaluationPolicy = EvaluationPolicy()) -> list[EvaluationRow]:
    """Rank bids by descending score; ties go to the lower price, then bid_id."""
    bids = list(bids)
    scores = [0.0] * len(bids)
    for criterion in policy.effective_criteria:
        if criterion.key == "price":
            values = [float(b.price) for b in bids]
        else:
            values = [_numeric(b.summary.get(criterion.key)) for b in bids]
        for k, x in enumerate(_normalized(values, criterion.direction)):
            scores[k] += criterion.weight * x
    rows = [
        EvaluationRow(b.bid_id, b.provider_id, round(s, 12), b.price, dict(b.summary))
        for b, s in zip(bids, scores)
    ]
    rows.sort(key=lambda r: (-r.score, r.price, r.bid_id))
    return rows


def render_table(rows: Iterable[EvaluationRow]) -> bytes:
    return json.dumps([r.to_dict() for r in rows], sort_keys=True, separators=(",", ":")).encode("utf-8")
