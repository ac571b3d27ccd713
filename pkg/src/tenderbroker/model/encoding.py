"""Encode descriptions and catalogs as requirement/capability matrices.

Each node type that a tender leaves open (or pins) becomes an attribute; its
realizations are the implementation names known for that type.
"""
from __future__ import annotations

import logging
from collections import deque
from typing import Iterable

import numpy as np

from tenderbroker.matching import (
    AttributeDef,
    AttributeSpace,
    CapabilityMatrix,
    RequirementMatrix,
)
from tenderbroker.model.catalog import ProviderCatalog
from tenderbroker.model.description import ModelError, ServiceDescription, open_requirements

logger = logging.getLogger(__name__)

# Realization given to an attribute no known catalog implements.
NO_IMPLEMENTATION = "*"


class EncodingError(ModelError):
    pass


def _chosen(desc: ServiceDescription) -> dict[str, list[str]]:
    """Implementations the description pins or accepts, per node type."""
    chosen: dict[str, list[str]] = {}
    for t in desc.templates:
        names = [t.implementation] if t.implementation else list(t.accept)
        for name in names:
            bucket = chosen.setdefault(t.type, [])
            if name not in bucket:
                bucket.append(name)
    return chosen


def build_attribute_space(
    desc: ServiceDescription, catalogs: Iterable[ProviderCatalog] = ()
) -> AttributeSpace:
    """Attributes for every node type the tender pins or may need filled.

    Starting from the open requirements, node types offering each needed
    capability (from the description's vocabulary or any catalog) are added,
    then the requirements those types and their implementations introduce.
    """
    catalogs = list(catalogs)
    vocab = desc.vocabulary()
    impls = [i for c in catalogs for i in c.implementations]
    chosen = _chosen(desc)

    types: set[str] = set(chosen)
    pending: deque[str] = deque(req for _, req in open_requirements(desc))
    for type_name, names in chosen.items():
        for impl in impls:
            if impl.implements_type == type_name and impl.name in names:
                pending.extend(impl.induced_requirements)
    seen_caps: set[str] = set()
    while pending:
        cap = pending.popleft()
        if cap in seen_caps:
            continue
        seen_caps.add(cap)
        providers = {nt.name for nt in vocab.values() if cap in nt.capabilities}
        providers |= {i.implements_type for i in impls if cap in i.provides}
        for type_name in sorted(providers - types):
            types.add(type_name)
            if type_name in vocab:
                pending.extend(sorted(vocab[type_name].requirements))
            for impl in impls:
                if impl.implements_type == type_name:
                    pending.extend(sorted(impl.induced_requirements))

    if not types:
        raise EncodingError(
            f"description {desc.id!r} pins no implementation and leaves nothing open"
        )
    attrs = []
    for type_name in sorted(types):
        names = {i.name for i in impls if i.implements_type == type_name}
        names.update(chosen.get(type_name, ()))
        attrs.append(AttributeDef(type_name, tuple(sorted(names)) or (NO_IMPLEMENTATION,)))
    return AttributeSpace(tuple(attrs))


def encode_tender(
    desc: ServiceDescription, space: AttributeSpace, tender_id: str | None = None
) -> RequirementMatrix:
    """Requirement matrix of a tender description over ``space``.

    Node types with pinned or accepted implementations give specified rows;
    every other attribute is left unspecified.
    """
    vocab = desc.vocabulary()
    names = {a.name for a in space.attributes}
    for node_id, req in open_requirements(desc):
        for nt in vocab.values():
            if req in nt.capabilities and nt.name not in names:
                raise EncodingError(
                    f"node type {nt.name!r} (needed by {node_id}.{req}) is not in the attribute space"
                )
    chosen = _chosen(desc)
    for type_name in chosen:
        if type_name not in names:
            raise EncodingError(f"node type {type_name!r} is not in the attribute space")

    entries = np.zeros(space.shape, dtype=np.int8)
    for i, attr in enumerate(space.attributes):
        picks = chosen.get(attr.name)
        if not picks:
            entries[i, :] = -1
            continue
        for name in picks:
            if name not in attr.realizations:
                raise EncodingError(f"{name!r} is not a realization of {attr.name!r}")
            entries[i, attr.realizations.index(name)] = 1
    return RequirementMatrix(tender_id or desc.id, entries)


def encode_catalog(catalog: ProviderCatalog, space: AttributeSpace) -> CapabilityMatrix:
    entries = np.zeros(space.shape, dtype=np.int8)
    index = {a.name: i for i, a in enumerate(space.attributes)}
    for impl in catalog.implementations:
        i = index.get(impl.implements_type)
        if i is None or impl.name not in space.attributes[i].realizations:
            logger.warning(
                "%s: implementation %r of %r is outside the attribute space; ignored",
                catalog.provider_id,
                impl.name,
                impl.implements_type,
            )
            continue
        entries[i, space.attributes[i].realizations.index(impl.name)] = 1
    return CapabilityMatrix(catalog.provider_id, entries)
