"""Capability/requirement matching and bid quantification.

Suppliers are described by binary capability matrices and tenders by
tri-state requirement matrices over a shared attribute space.  Row ``i`` of
either matrix covers the realizations of attribute ``i``; attributes with
fewer realizations than the space width ``p`` are padded.

Requirement entries:

* ``1``  realization desired
* ``0``  realization not desired (also every padded slot of a specified row)
* ``-1`` attribute left unspecified (the whole row, padding included)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

__all__ = [
    "AttributeDef",
    "AttributeSpace",
    "CapabilityMatrix",
    "DimensionError",
    "Frequency",
    "MatchingError",
    "RequirementMatrix",
    "Satisfaction",
    "SupplierRegistry",
    "TenderSeries",
    "ValidationReport",
    "Violation",
    "acceptance_frequency",
    "eligible",
    "match_vector",
    "satisfaction_probability",
    "support_frequency",
    "unspecified_count",
    "validate_requirement_matrix",
]

UNSPECIFIED = -1


class MatchingError(ValueError):
    pass


class DimensionError(MatchingError):
    pass


@dataclass(frozen=True)
class AttributeDef:
    name: str
    realizations: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "realizations", tuple(self.realizations))
        if not self.realizations:
            raise MatchingError(f"attribute {self.name!r} has no realizations")
        if len(set(self.realizations)) != len(self.realizations):
            raise MatchingError(f"attribute {self.name!r} has duplicate realizations")


@dataclass(frozen=True)
class AttributeSpace:
    """Ordered attributes plus the padded row width ``p``."""

    attributes: tuple[AttributeDef, ...]
    p: int = 0

    def __post_init__(self) -> None:
        attrs = tuple(self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if not attrs:
            raise MatchingError("an attribute space needs at least one attribute")
        names = [a.name for a in attrs]
        if len(set(names)) != len(names):
            raise MatchingError("attribute names must be unique")
        widest = max(len(a.realizations) for a in attrs)
        p = self.p or widest
        if p < widest:
            raise MatchingError(f"p={p} is smaller than the widest attribute ({widest})")
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, m: int, p: int) -> "AttributeSpace":
        """Anonymous space of ``m`` attributes with ``p`` realizations each."""
        return cls(
            tuple(
                AttributeDef(f"A{i + 1}", tuple(f"a{i + 1},{j + 1}" for j in range(p)))
                for i in range(m)
            ),
            p,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "AttributeSpace":
        return cls(
            tuple(AttributeDef(a["name"], tuple(a["realizations"])) for a in data["attributes"]),
            int(data.get("p", 0)),
        )

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "attributes": [
                {"name": a.name, "realizations": list(a.realizations)} for a in self.attributes
            ],
        }

    @property
    def m(self) -> int:
        return len(self.attributes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.p)

    def index(self, name: str) -> int:
        for i, attr in enumerate(self.attributes):
            if attr.name == name:
                return i
        raise KeyError(name)

    def position(self, attribute: str, realization: str) -> tuple[int, int]:
        i = self.index(attribute)
        return i, self.attributes[i].realizations.index(realization)

    def padding_mask(self) -> np.ndarray:
        """Boolean m x p mask, True at padded slots."""
        mask = np.zeros(self.shape, dtype=bool)
        for i, attr in enumerate(self.attributes):
            mask[i, len(attr.realizations):] = True
        return mask


def _as_matrix(entries, dtype=np.int8) -> np.ndarray:
    arr = np.array(entries, dtype=dtype)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CapabilityMatrix:
    supplier_id: str
    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = _as_matrix(self.entries)
        if not np.isin(arr, (0, 1)).all():
            raise MatchingError(f"capability matrix of {self.supplier_id!r} must be binary")
        object.__setattr__(self, "entries", arr)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CapabilityMatrix):
            return NotImplemented
        return self.supplier_id == other.supplier_id and np.array_equal(self.entries, other.entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def check(self, space: AttributeSpace) -> None:
        if self.shape != space.shape:
            raise DimensionError(f"capability matrix shape {self.shape} != space {space.shape}")
        if self.entries[space.padding_mask()].any():
            raise MatchingError("capability matrix supports a padded realization")

    def to_dict(self) -> dict:
        return {"supplier_id": self.supplier_id, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "CapabilityMatrix":
        return cls(data["supplier_id"], data["entries"])


@dataclass(frozen=True, eq=False)
class RequirementMatrix:
    tender_id: str
    entries: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _as_matrix(self.entries))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RequirementMatrix):
            return NotImplemented
        return self.tender_id == other.tender_id and np.array_equal(self.entries, other.entries)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def unspecified_rows(self) -> np.ndarray:
        return (self.entries == UNSPECIFIED).all(axis=1)

    def to_dict(self) -> dict:
        return {"tender_id": self.tender_id, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "RequirementMatrix":
        return cls(data["tender_id"], data["entries"])


@dataclass(frozen=True)
class Violation:
    row: int
    kind: str  # "out_of_range" | "mixed_row" | "no_desired" | "padding"
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate_requirement_matrix(matrix: RequirementMatrix, space: AttributeSpace) -> ValidationReport:
    """Check ``matrix`` against the canonical row rule.

    A row is either fully unspecified (all ``-1``) or fully specified
    (``0``/``1`` with at least one ``1``, zeros in the padding).
    """
    if matrix.shape != space.shape:
        raise DimensionError(f"requirement matrix shape {matrix.shape} != space {space.shape}")
    found: list[Violation] = []
    pad = space.padding_mask()
    for i, row in enumerate(matrix.entries):
        bad = sorted({int(v) for v in row} - {-1, 0, 1})
        if bad:
            found.append(Violation(i, "out_of_range", f"values {bad}"))
            continue
        if (row == UNSPECIFIED).all():
            continue
        if (row == UNSPECIFIED).any():
            found.append(Violation(i, "mixed_row", "row mixes -1 with specified entries"))
            continue
        if not (row == 1).any():
            found.append(Violation(i, "no_desired", "specified row desires no realization"))
        elif row[pad[i]].any():
            found.append(Violation(i, "padding", "padded slot marked as desired"))
    return ValidationReport(tuple(found))


def match_vector(capability: CapabilityMatrix, requirement: RequirementMatrix) -> tuple[int, ...]:
    """Row-wise dot products of the capability and requirement matrices."""
    if capability.shape != requirement.shape:
        raise DimensionError(f"shape mismatch: {capability.shape} vs {requirement.shape}")
    mu = np.einsum("ij,ij->i", capability.entries.astype(np.int64), requirement.entries.astype(np.int64))
    return tuple(int(v) for v in mu)


def eligible(vector: Sequence[int]) -> bool:
    """A supplier bids only if it can satisfy every attribute (no zero component)."""
    if len(vector) == 0:
        raise MatchingError("empty matching vector")
    return all(v != 0 for v in vector)


def unspecified_count(requirement: RequirementMatrix) -> Fraction:
    """Number of unspecified attributes, (1/2p) * sum(|r| - r)."""
    r = requirement.entries.astype(np.int64)
    p = r.shape[1]
    return Fraction(int((np.abs(r) - r).sum()), 2 * p)


@dataclass(frozen=True)
class SupplierRegistry:
    suppliers: tuple[CapabilityMatrix, ...]

    def __post_init__(self) -> None:
        sups = tuple(self.suppliers)
        object.__setattr__(self, "suppliers", sups)
        if not sups:
            raise MatchingError("supplier registry is empty")
        ids = [s.supplier_id for s in sups]
        if len(set(ids)) != len(ids):
            raise MatchingError("supplier ids must be unique")
        if len({s.shape for s in sups}) != 1:
            raise DimensionError("suppliers disagree on matrix shape")

    @property
    def N(self) -> int:
        return len(self.suppliers)

    def stacked(self) -> np.ndarray:
        return np.stack([s.entries for s in self.suppliers])


@dataclass(frozen=True)
class TenderSeries:
    tenders: tuple[RequirementMatrix, ...]

    def __post_init__(self) -> None:
        ts = tuple(self.tenders)
        object.__setattr__(self, "tenders", ts)
        if not ts:
            raise MatchingError("tender series is empty")
        ids = [t.tender_id for t in ts]
        if len(set(ids)) != len(ids):
            raise MatchingError("tender ids must be unique")
        if len({t.shape for t in ts}) != 1:
            raise DimensionError("tenders disagree on matrix shape")

    @property
    def M(self) -> int:
        return len(self.tenders)

    def stacked(self) -> np.ndarray:
        return np.stack([t.entries for t in self.tenders])


@dataclass(frozen=True, eq=False)
class Frequency:
    """An m x p matrix of exact frequencies ``counts / total``."""

    counts: np.ndarray
    total: int

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frequency):
            return NotImplemented
        return self.fractions() == other.fractions()

    def fraction(self, i: int, j: int) -> Fraction:
        return Fraction(int(self.counts[i, j]), self.total)

    def fractions(self) -> list[list[Fraction]]:
        return [[Fraction(int(c), self.total) for c in row] for row in self.counts]

    @property
    def values(self) -> np.ndarray:
        return self.counts / self.total


def support_frequency(registry: SupplierRegistry) -> Frequency:
    """Fraction of suppliers supporting each realization."""
    kappa = registry.stacked().astype(np.int64).sum(axis=0)
    return Frequency(kappa, registry.N)


def acceptance_frequency(series: TenderSeries) -> Frequency:
    """Fraction of tenders that would accept each realization (|r| summed)."""
    counts = np.abs(series.stacked().astype(np.int64)).sum(axis=0)
    return Frequency(counts, series.M)


@dataclass(frozen=True)
class Satisfaction:
    value: float
    log_value: float


def satisfaction_probability(registry: SupplierRegistry, series: TenderSeries) -> Satisfaction:
    """Product of P*Q over every (attribute, realization) slot.

    The product is accumulated in log space; ``value`` underflows to 0.0 and
    ``log_value`` is ``-inf`` when any factor is zero.
    """
    P = support_frequency(registry)
    Q = acceptance_frequency(series)
    if P.counts.shape != Q.counts.shape:
        raise DimensionError("registry and series disagree on matrix shape")
    factors = P.counts * Q.counts
    if (factors == 0).any():
        return Satisfaction(0.0, -math.inf)
    logs = np.log(P.counts) + np.log(Q.counts) - math.log(P.total) - math.log(Q.total)
    log_value = math.fsum(logs.ravel().tolist())
    return Satisfaction(math.exp(log_value), log_value)
