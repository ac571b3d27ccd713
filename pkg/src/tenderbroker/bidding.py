"""Bid generation: complete a partial description against one provider catalog.

Completion is a closure over open requirements.  Every open requirement is
filled by a new node for some catalog implementation offering the needed
capability; that implementation's own requirements are then opened in turn.
Each choice point branches, so a single tender yields a family of complete
candidates (e.g. a MySQL tier of virtual machines vs. a hosted database).
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Mapping

from tenderbroker.matching import AttributeSpace, eligible, match_vector
from tenderbroker.model.catalog import NodeTypeImplementation, ProviderCatalog
from tenderbroker.model.constraints import (
    CoprocessorConstraint,
    CoprocessorMatch,
    classad_facts,
    eval_coprocessor_constraint,
    evaluate_constraint,
    offered_cores,
    offers_accelerator,
    parse_constraint,
)
from tenderbroker.model.description import (
    NodeTemplate,
    NodeType,
    Relationship,
    ServiceDescription,
    description_from_dict,
    open_requirements,
    relationship_kind,
    validate_description,
)
from tenderbroker.model.encoding import encode_catalog, encode_tender

logger = logging.getLogger(__name__)

# Substitution key for a template whose own implementation is chosen from its
# ``accept`` list rather than for one of its requirements.
IMPLEMENTATION_CHOICE = "@implementation"
CLASSAD_TAG = "classad.requirements"


class PricingError(ValueError):
    pass


@dataclass(frozen=True)
class CompletionLimits:
    max_candidates: int = 32
    max_depth: int = 8
    max_bids: int = 4

    def __post_init__(self) -> None:
        for name in ("max_candidates", "max_depth", "max_bids"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class CompletionCandidate:
    description: ServiceDescription
    substitutions: tuple[tuple[tuple[str, str], str], ...] = ()
    uses_managed_services: bool = False
    accelerator_assignments: tuple[tuple[str, Mapping[str, str]], ...] = ()

    def to_dict(self) -> dict:
        return {
            "description": self.description.to_dict(),
            "substitutions": [[node, req, impl] for (node, req), impl in self.substitutions],
            "uses_managed_services": self.uses_managed_services,
            "accelerator_assignments": [
                [node, dict(sorted(facts.items()))] for node, facts in self.accelerator_assignments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompletionCandidate":
        return cls(
            description=description_from_dict(data["description"]),
            substitutions=tuple(((n, r), i) for n, r, i in data.get("substitutions", [])),
            uses_managed_services=bool(data.get("uses_managed_services", False)),
            accelerator_assignments=tuple(
                (n, dict(f)) for n, f in data.get("accelerator_assignments", [])
            ),
        )


@dataclass(frozen=True)
class Bid:
    bid_id: str
    tender_id: str
    provider_id: str
    candidate: CompletionCandidate
    price: Decimal
    summary: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "bid_id": self.bid_id,
            "tender_id": self.tender_id,
            "provider_id": self.provider_id,
            "price": str(self.price),
            "summary": dict(sorted(self.summary.items())),
            "candidate": self.candidate.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Bid":
        price = Decimal(str(data["price"]))
        if price < 0:
            raise ValueError("bid price must be non-negative")
        summary = {str(k): str(v) for k, v in (data.get("summary") or {}).items()}
        summary.setdefault("price", str(price))
        return cls(
            bid_id=data["bid_id"],
            tender_id=data["tender_id"],
            provider_id=data["provider_id"],
            candidate=CompletionCandidate.from_dict(data["candidate"]),
            price=price,
            summary=summary,
        )


@dataclass
class _State:
    templates: list[NodeTemplate]
    node_types: dict[str, NodeType]
    relationships: list[Relationship]
    depth: dict[str, int]
    substitutions: list[tuple[tuple[str, str], str]]
    managed: bool = False

    def copy(self) -> "_State":
        return _State(
            list(self.templates),
            dict(self.node_types),
            list(self.relationships),
            dict(self.depth),
            list(self.substitutions),
            self.managed,
        )

    def description(self, base: ServiceDescription) -> ServiceDescription:
        return replace(
            base,
            node_types=tuple(self.node_types.values()),
            templates=tuple(self.templates),
            relationships=tuple(self.relationships),
        )

    def replace_template(self, node_id: str, new: NodeTemplate) -> None:
        self.templates = [new if t.id == node_id else t for t in self.templates]

    def template(self, node_id: str) -> NodeTemplate:
        return next(t for t in self.templates if t.id == node_id)


def _effective_type(
    impl: NodeTypeImplementation, state: _State, catalog: ProviderCatalog
) -> NodeType:
    known = state.node_types.get(impl.implements_type)
    if known is not None:
        return known
    caps = frozenset().union(
        *(i.provides for i in catalog.implementations if i.implements_type == impl.implements_type)
    )
    return NodeType(impl.implements_type, caps)


def _open_induced(template: NodeTemplate, impl: NodeTypeImplementation) -> NodeTemplate:
    reqs = dict(template.requirements)
    for r in sorted(impl.induced_requirements):
        reqs.setdefault(r, None)
    return replace(template, requirements=reqs)


def _usable(impl: NodeTypeImplementation, allowed: Mapping[str, frozenset[str]]) -> bool:
    restricted = allowed.get(impl.implements_type)
    return restricted is None or impl.name in restricted


def complete_description(
    partial: ServiceDescription,
    catalog: ProviderCatalog,
    limits: CompletionLimits = CompletionLimits(),
    allowed: Mapping[str, frozenset[str]] | None = None,
    diagnostics: list[str] | None = None,
) -> list[CompletionCandidate]:
    """Enumerate complete instantiations of ``partial`` from ``catalog``.

    Open requirements are filled breadth first (shallowest node first).  At
    each choice point the offering implementations are tried in (node type,
    name) order, which fixes the enumeration order of the result.  ``allowed``
    restricts node types to the implementations a tender pinned or accepted.
    Branches deeper than ``limits.max_depth`` are abandoned and reported in
    ``diagnostics``.
    """
    allowed = dict(allowed or {})
    notes = diagnostics if diagnostics is not None else []
    validate_description(partial)

    root = _State(
        list(partial.templates),
        dict(partial.vocabulary()),
        list(partial.relationships),
        {t.id: 0 for t in partial.templates},
        [],
    )
    # Templates that pin an implementation open its requirements; templates
    # with an accept list branch over the accepted implementations.
    for t in partial.templates:
        if t.implementation:
            impl = catalog.get(t.implementation)
            if impl is not None:
                root.replace_template(t.id, _open_induced(t, impl))
    states: deque[_State] = deque([root])
    for t in partial.templates:
        if t.implementation or not t.accept:
            continue
        options = sorted(
            (i for i in (catalog.get(n) for n in t.accept) if i is not None and i.implements_type == t.type),
            key=lambda i: (i.implements_type, i.name),
        )
        options = [i for i in options if _usable(i, allowed)]
        expanded: deque[_State] = deque()
        for state in states:
            for impl in options:
                nxt = state.copy()
                nxt.replace_template(t.id, _open_induced(replace(t, implementation=impl.name), impl))
                nxt.substitutions.append(((t.id, IMPLEMENTATION_CHOICE), impl.name))
                nxt.managed = nxt.managed or impl.managed_service
                expanded.append(nxt)
        states = expanded

    results: list[CompletionCandidate] = []
    seen: set[frozenset] = set()

    def expand(state: _State) -> None:
        if len(results) >= limits.max_candidates:
            return
        desc = state.description(partial)
        pending = open_requirements(desc)
        if not pending:
            key = frozenset(state.substitutions)
            if key not in seen:
                seen.add(key)
                results.append(
                    CompletionCandidate(desc, tuple(state.substitutions), state.managed)
                )
            return
        node_id, req = min(pending, key=lambda nr: (state.depth[nr[0]], nr[0], nr[1]))
        depth = state.depth[node_id] + 1
        if depth > limits.max_depth:
            notes.append(f"{node_id}.{req}: closure depth {limits.max_depth} exceeded, branch abandoned")
            return
        requirer = state.template(node_id)
        for impl in catalog.providing(req):
            if not _usable(impl, allowed):
                continue
            node_type = _effective_type(impl, state, catalog)
            if req not in node_type.capabilities:
                continue
            nxt = state.copy()
            nxt.node_types.setdefault(node_type.name, node_type)
            new_id = f"{node_id}.{req}"
            while new_id in nxt.depth:
                new_id += "'"
            nxt.templates.append(
                NodeTemplate(
                    id=new_id,
                    type=node_type.name,
                    tier=requirer.tier,
                    implementation=impl.name,
                    requirements={r: None for r in sorted(impl.induced_requirements)},
                    tags=dict(impl.tags),
                )
            )
            bound = dict(requirer.requirements)
            bound[req] = new_id
            nxt.replace_template(node_id, replace(requirer, requirements=bound))
            nxt.relationships.append(Relationship(node_id, new_id, relationship_kind(req)))
            nxt.depth[new_id] = depth
            nxt.substitutions.append(((node_id, req), impl.name))
            nxt.managed = nxt.managed or impl.managed_service
            expand(nxt)
            if len(results) >= limits.max_candidates:
                return

    for state in states:
        expand(state)
    for note in notes:
        logger.info("%s: %s", catalog.provider_id, note)
    return results


def _reachable(desc: ServiceDescription, start: str) -> list[NodeTemplate]:
    by_id = {t.id: t for t in desc.templates}
    order, queue, seen = [], deque([start]), {start}
    while queue:
        node = by_id[queue.popleft()]
        order.append(node)
        for target in sorted(v for v in node.requirements.values() if v is not None):
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return order


def apply_constraints(candidate: CompletionCandidate) -> CompletionCandidate | None:
    """Filter by coprocessor profiles and classad expressions.

    Returns the candidate with its accelerator assignments, or None when some
    constrained node cannot be satisfied.  The facts for a constrained node
    are the tags of the nodes it transitively requires.
    """
    desc = candidate.description
    vocab = desc.vocabulary()
    assignments: dict[str, dict[str, str]] = {}
    for t in desc.templates:
        tags = {**vocab[t.type].tags, **t.tags}
        profile = CoprocessorConstraint.from_tags(tags)
        expression = tags.get(CLASSAD_TAG)
        if profile is None and expression is None:
            continue
        below = _reachable(desc, t.id)
        if expression is not None:
            facts: dict[str, str] = {}
            for node in reversed(below):
                facts.update(node.tags)
            if not evaluate_constraint(parse_constraint(expression), classad_facts(facts)):
                return None
        if profile is None:
            continue
        gpus = [n for n in below if offers_accelerator(n.tags)]
        if not gpus:
            if eval_coprocessor_constraint(profile, {}) is CoprocessorMatch.NO_MATCH:
                return None
            continue
        for node in gpus:
            verdict = eval_coprocessor_constraint(profile, node.tags)
            if verdict is CoprocessorMatch.MATCH:
                cards, cores = offered_cores(profile, node.tags)
                assignments.setdefault(
                    node.id,
                    {**node.tags, "assigned.cards": str(cards), "assigned.cores": str(cores)},
                )
                break
            if verdict is CoprocessorMatch.NO_MATCH:
                return None
    return replace(candidate, accelerator_assignments=tuple(sorted(assignments.items())))


def price_candidate(candidate: CompletionCandidate, catalog: ProviderCatalog) -> Decimal:
    """Hourly price: every implementation in the topology plus attached accelerators.

    Accelerators are priced per card under their ``gpu.model`` name.
    """
    total = Decimal("0")
    for t in candidate.description.templates:
        if t.implementation is None:
            continue
        if t.implementation not in catalog.price_table:
            raise PricingError(f"{catalog.provider_id} has no price for {t.implementation!r}")
        total += catalog.price_table[t.implementation]
    for node_id, facts in candidate.accelerator_assignments:
        model = facts.get("gpu.model")
        if model is None or model not in catalog.price_table:
            raise PricingError(f"{catalog.provider_id} has no per-card price for accelerator on {node_id}")
        total += catalog.price_table[model] * int(facts.get("assigned.cards", "1"))
    return total


def _summary(candidate: CompletionCandidate, price: Decimal) -> dict[str, str]:
    impls = sorted({t.implementation for t in candidate.description.templates if t.implementation})
    return {
        "price": str(price),
        "managed_services": "true" if candidate.uses_managed_services else "false",
        "accelerated": "true" if candidate.accelerator_assignments else "false",
        "nodes": str(len(candidate.description.templates)),
        "substitutions": str(len(candidate.substitutions)),
        "implementations": ",".join(impls),
    }


def specified_rows(space: AttributeSpace, requirement) -> dict[str, frozenset[str]]:
    out = {}
    for attr, row in zip(space.attributes, requirement.entries):
        if (row != -1).any():
            out[attr.name] = frozenset(
                name for name, v in zip(attr.realizations, row) if v == 1
            )
    return out


def generate_bids(
    tender,
    catalog: ProviderCatalog,
    space: AttributeSpace,
    limits: CompletionLimits = CompletionLimits(),
) -> list[Bid]:
    """Bids of one provider for ``tender`` (anything with ``tender_id`` and ``description``).

    Suppliers whose matching vector has a zero component do not bid at all.
    """
    requirement = encode_tender(tender.description, space, tender.tender_id)
    capability = encode_catalog(catalog, space)
    if not eligible(match_vector(capability, requirement)):
        return []
    candidates = complete_description(
        tender.description, catalog, limits, allowed=specified_rows(space, requirement)
    )
    priced = []
    for order, candidate in enumerate(candidates):
        constrained = apply_constraints(candidate)
        if constrained is None:
            continue
        try:
            price = price_candidate(constrained, catalog)
        except PricingError as exc:
            logger.warning("dropping candidate %d: %s", order, exc)
            continue
        priced.append((price, order, constrained))
    priced.sort(key=lambda item: (item[0], item[1]))
    return [
        Bid(
            bid_id=f"{tender.tender_id}/{catalog.provider_id}/{k + 1}",
            tender_id=tender.tender_id,
            provider_id=catalog.provider_id,
            candidate=candidate,
            price=price,
            summary=_summary(candidate, price),
        )
        for k, (price, _, candidate) in enumerate(priced[: limits.max_bids])
    ]
