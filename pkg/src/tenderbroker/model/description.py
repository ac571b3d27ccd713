"""Service descriptions: typed node templates wired by requirements.

A description is a JSON document::

    {
      "format_version": 1,
      "id": "sugarcrm-partial",
      "node_types": [{"name": ..., "capabilities": [...], "requirements": [...], "tags": {...}}],
      "templates": [{"id": ..., "type": ..., "tier": ..., "implementation": ...,
                     "accept": [...], "requirements": {"os_host": "os_web"}, "tags": {...}}],
      "relationships": [{"source": ..., "target": ..., "kind": "hosted_on"}],
      "tags": {...}
    }

A template's requirements are its type's requirements plus any keys listed in
its own ``requirements`` map.  A requirement is met when it is bound to a
template whose type offers a capability of the same name.
"""
from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

FORMAT_VERSION = 1
RELATIONSHIP_KINDS = ("hosted_on", "depends_on", "connects_to")

_TOP_KEYS = {"format_version", "id", "node_types", "templates", "relationships", "tags"}
_TYPE_KEYS = {"name", "capabilities", "requirements", "tags"}
_TEMPLATE_KEYS = {"id", "type", "tier", "implementation", "accept", "requirements", "tags"}
_REL_KEYS = {"source", "target", "kind"}


class ModelError(ValueError):
    pass


class DocumentSyntaxError(ModelError):
    def __init__(self, msg: str, line: int = 0, column: int = 0):
        super().__init__(f"{msg} (line {line}, column {column})")
        self.line = line
        self.column = column


class SemanticError(ModelError):
    def __init__(self, msg: str, offending: str | None = None):
        super().__init__(msg)
        self.offending = offending


@dataclass(frozen=True)
class NodeType:
    name: str
    capabilities: frozenset[str] = frozenset()
    requirements: frozenset[str] = frozenset()
    tags: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "capabilities": sorted(self.capabilities),
            "requirements": sorted(self.requirements),
            "tags": dict(sorted(self.tags.items())),
        }


@dataclass(frozen=True)
class NodeTemplate:
    id: str
    type: str
    tier: str | None = None
    implementation: str | None = None
    accept: tuple[str, ...] = ()
    requirements: Mapping[str, str | None] = field(default_factory=dict)
    tags: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"id": self.id, "type": self.type}
        if self.tier is not None:
            out["tier"] = self.tier
        if self.implementation is not None:
            out["implementation"] = self.implementation
        if self.accept:
            out["accept"] = list(self.accept)
        out["requirements"] = dict(sorted(self.requirements.items()))
        out["tags"] = dict(sorted(self.tags.items()))
        return out


@dataclass(frozen=True)
class Relationship:
    source: str
    target: str
    kind: str


@dataclass(frozen=True)
class ServiceDescription:
    id: str
    node_types: tuple[NodeType, ...] = ()
    templates: tuple[NodeTemplate, ...] = ()
    relationships: tuple[Relationship, ...] = ()
    tags: Mapping[str, str] = field(default_factory=dict)

    def vocabulary(self) -> dict[str, NodeType]:
        return {t.name: t for t in self.node_types}

    def template(self, node_id: str) -> NodeTemplate:
        for t in self.templates:
            if t.id == node_id:
                return t
        raise KeyError(node_id)

    @property
    def complete(self) -> bool:
        return not open_requirements(self)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "id": self.id,
            "node_types": [t.to_dict() for t in self.node_types],
            "templates": [t.to_dict() for t in self.templates],
            "relationships": [
                {"source": r.source, "target": r.target, "kind": r.kind} for r in self.relationships
            ],
            "tags": dict(sorted(self.tags.items())),
        }


def _reject_unknown(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SemanticError(f"unknown keys in {where}: {', '.join(unknown)}", unknown[0])


def _str_map(value, where: str) -> dict[str, str]:
    if value is None:
        return {}
    if not isinstance(value, dict) or not all(isinstance(v, str) for v in value.values()):
        raise SemanticError(f"{where} must map strings to strings")
    return dict(value)


def _str_list(value, where: str) -> list[str]:
    if value is None:
        return []
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SemanticError(f"{where} must be a list of strings")
    return list(value)


def _require(obj: dict, key: str, where: str) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value:
        raise SemanticError(f"{where} needs a non-empty string {key!r}")
    return value


def description_from_dict(data: dict) -> ServiceDescription:
    if not isinstance(data, dict):
        raise SemanticError("a description document must be an object")
    _reject_unknown(data, _TOP_KEYS, "document")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise SemanticError(f"unsupported format_version {version!r}")

    node_types = []
    for raw in data.get("node_types") or []:
        _reject_unknown(raw, _TYPE_KEYS, "node type")
        name = _require(raw, "name", "node type")
        node_types.append(
            NodeType(
                name,
                frozenset(_str_list(raw.get("capabilities"), f"{name}.capabilities")),
                frozenset(_str_list(raw.get("requirements"), f"{name}.requirements")),
                _str_map(raw.get("tags"), f"{name}.tags"),
            )
        )

    templates = []
    for raw in data.get("templates") or []:
        _reject_unknown(raw, _TEMPLATE_KEYS, "template")
        tid = _require(raw, "id", "template")
        reqs = raw.get("requirements") or {}
        if not isinstance(reqs, dict) or not all(v is None or isinstance(v, str) for v in reqs.values()):
            raise SemanticError(f"{tid}.requirements must map names to node ids or null", tid)
        impl = raw.get("implementation")
        if impl is not None and not isinstance(impl, str):
            raise SemanticError(f"{tid}.implementation must be a string", tid)
        tier = raw.get("tier")
        if tier is not None and not isinstance(tier, str):
            raise SemanticError(f"{tid}.tier must be a string", tid)
        templates.append(
            NodeTemplate(
                tid,
                _require(raw, "type", f"template {tid}"),
                tier,
                impl,
                tuple(_str_list(raw.get("accept"), f"{tid}.accept")),
                dict(reqs),
                _str_map(raw.get("tags"), f"{tid}.tags"),
            )
        )

    relationships = []
    for raw in data.get("relationships") or []:
        _reject_unknown(raw, _REL_KEYS, "relationship")
        relationships.append(
            Relationship(
                _require(raw, "source", "relationship"),
                _require(raw, "target", "relationship"),
                _require(raw, "kind", "relationship"),
            )
        )

    desc = ServiceDescription(
        id=data.get("id") or "",
        node_types=tuple(node_types),
        templates=tuple(templates),
        relationships=tuple(relationships),
        tags=_str_map(data.get("tags"), "document tags"),
    )
    validate_description(desc)
    return desc


def parse_description(text: str | bytes) -> ServiceDescription:
    """Parse and validate a description document."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentSyntaxError(f"document is not UTF-8: {exc.reason}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    return description_from_dict(data)


def serialize_description(desc: ServiceDescription) -> bytes:
    return (json.dumps(desc.to_dict(), indent=2, sort_keys=False) + "\n").encode("utf-8")


def validate_description(desc: ServiceDescription) -> None:
    """Raise :class:`SemanticError` on dangling references or hosting cycles."""
    vocab: dict[str, NodeType] = {}
    for nt in desc.node_types:
        if nt.name in vocab:
            raise SemanticError(f"node type {nt.name!r} declared twice", nt.name)
        vocab[nt.name] = nt

    ids: set[str] = set()
    for t in desc.templates:
        if t.id in ids:
            raise SemanticError(f"template id {t.id!r} used twice", t.id)
        ids.add(t.id)
    for t in desc.templates:
        if t.type not in vocab:
            raise SemanticError(f"template {t.id!r} has undeclared type {t.type!r}", t.type)
        for req, target in t.requirements.items():
            if target is not None and target not in ids:
                raise SemanticError(f"{t.id}.{req} is bound to unknown node {target!r}", target)

    hosting = graphlib.TopologicalSorter()
    for rel in desc.relationships:
        for end in (rel.source, rel.target):
            if end not in ids:
                raise SemanticError(f"relationship references unknown node {end!r}", end)
        if rel.kind not in RELATIONSHIP_KINDS:
            raise SemanticError(f"unknown relationship kind {rel.kind!r}", rel.kind)
        if rel.kind == "hosted_on":
            hosting.add(rel.source, rel.target)
    try:
        hosting.prepare()
    except graphlib.CycleError as exc:
        raise SemanticError(f"hosted_on cycle: {' -> '.join(exc.args[1])}", exc.args[1][0]) from exc


def requirement_names(template: NodeTemplate, vocab: Mapping[str, NodeType]) -> list[str]:
    return sorted(vocab[template.type].requirements | set(template.requirements))


def open_requirements(
    desc: ServiceDescription, vocabulary: Iterable[NodeType] | None = None
) -> list[tuple[str, str]]:
    """Requirements with no bound target offering the matching capability."""
    vocab = desc.vocabulary()
    if vocabulary is not None:
        vocab.update({t.name: t for t in vocabulary})
    by_id = {t.id: t for t in desc.templates}
    for t in desc.templates:
        if t.type not in vocab:
            raise SemanticError(f"template {t.id!r} has unresolvable type {t.type!r}", t.type)
    found = []
    for t in desc.templates:
        for req in requirement_names(t, vocab):
            target = t.requirements.get(req)
            if target is None or req not in vocab[by_id[target].type].capabilities:
                found.append((t.id, req))
    return found


def relationship_kind(requirement: str) -> str:
    """Relationship kind used when a requirement is bound automatically."""
    return "hosted_on" if requirement == "host" or requirement.endswith("_host") else "depends_on"
