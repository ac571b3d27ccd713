"""Provider catalogs: node type implementations and their hourly prices."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Mapping

from tenderbroker.model.description import DocumentSyntaxError, SemanticError

_CATALOG_KEYS = {"provider_id", "implementations", "price_table"}
_IMPL_KEYS = {"name", "implements_type", "provides", "induced_requirements", "tags", "managed_service"}


@dataclass(frozen=True)
class NodeTypeImplementation:
    name: str
    implements_type: str
    provides: frozenset[str]
    induced_requirements: frozenset[str] = frozenset()
    tags: Mapping[str, str] = field(default_factory=dict)
    managed_service: bool = False

    def __post_init__(self) -> None:
        if not self.provides:
            raise SemanticError(f"implementation {self.name!r} provides no capability", self.name)
        if self.managed_service and self.induced_requirements:
            raise SemanticError(
                f"managed service {self.name!r} cannot introduce requirements", self.name
            )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "implements_type": self.implements_type,
            "provides": sorted(self.provides),
            "induced_requirements": sorted(self.induced_requirements),
            "tags": dict(sorted(self.tags.items())),
            "managed_service": self.managed_service,
        }


@dataclass(frozen=True)
class ProviderCatalog:
    provider_id: str
    implementations: tuple[NodeTypeImplementation, ...] = ()
    price_table: Mapping[str, Decimal] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [i.name for i in self.implementations]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SemanticError(f"duplicate implementations: {sorted(dup)}", sorted(dup)[0])
        for key, price in self.price_table.items():
            if price < 0:
                raise SemanticError(f"negative price for {key!r}", key)

    def get(self, name: str) -> NodeTypeImplementation | None:
        for impl in self.implementations:
            if impl.name == name:
                return impl
        return None

    def providing(self, capability: str) -> list[NodeTypeImplementation]:
        """Implementations offering ``capability``, by (type, name)."""
        return sorted(
            (i for i in self.implementations if capability in i.provides),
            key=lambda i: (i.implements_type, i.name),
        )

    def to_dict(self) -> dict:
        return {
            "provider_id": self.provider_id,
            "implementations": [i.to_dict() for i in self.implementations],
            "price_table": {k: str(v) for k, v in sorted(self.price_table.items())},
        }


def _price(value, key: str) -> Decimal:
    if isinstance(value, bool):
        raise SemanticError(f"price for {key!r} is not a number", key)
    try:
        return Decimal(str(value))
    except InvalidOperation as exc:
        raise SemanticError(f"price for {key!r} is not a number", key) from exc


def catalog_from_dict(data: dict) -> ProviderCatalog:
    if not isinstance(data, dict):
        raise SemanticError("a catalog document must be an object")
    unknown = sorted(set(data) - _CATALOG_KEYS)
    if unknown:
        raise SemanticError(f"unknown catalog keys: {unknown}", unknown[0])
    provider = data.get("provider_id")
    if not isinstance(provider, str) or not provider:
        raise SemanticError("catalog needs a provider_id")
    impls = []
    for raw in data.get("implementations") or []:
        unknown = sorted(set(raw) - _IMPL_KEYS)
        if unknown:
            raise SemanticError(f"unknown implementation keys: {unknown}", unknown[0])
        try:
            impls.append(
                NodeTypeImplementation(
                    name=raw["name"],
                    implements_type=raw["implements_type"],
                    provides=frozenset(raw.get("provides") or []),
                    induced_requirements=frozenset(raw.get("induced_requirements") or []),
                    tags={str(k): str(v) for k, v in (raw.get("tags") or {}).items()},
                    managed_service=bool(raw.get("managed_service", False)),
                )
            )
        except KeyError as exc:
            raise SemanticError(f"implementation missing {exc.args[0]!r}") from exc
    prices = {str(k): _price(v, k) for k, v in (data.get("price_table") or {}).items()}
    return ProviderCatalog(provider, tuple(impls), prices)


def parse_catalog(text: str | bytes) -> ProviderCatalog:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    return catalog_from_dict(data)


def serialize_catalog(catalog: ProviderCatalog) -> bytes:
    return (json.dumps(catalog.to_dict(), indent=2) + "\n").encode("utf-8")
