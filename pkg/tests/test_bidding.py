from dataclasses import replace
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import catalog_completions, naive_match
from reference_inputs import GPU_CLASSAD, GPU_TAGS
from tenderbroker import fixtures
from tenderbroker.bidding import (
    IMPLEMENTATION_CHOICE,
    Bid,
    CompletionCandidate,
    CompletionLimits,
    PricingError,
    apply_constraints,
    complete_description,
    generate_bids,
    price_candidate,
)
from tenderbroker.matching import AttributeSpace
from tenderbroker.model import (
    NodeTypeImplementation,
    ProviderCatalog,
    build_attribute_space,
    description_from_dict,
    open_requirements,
    parse_catalog,
    parse_description,
    validate_description,
)


class Tender:
    def __init__(self, tender_id, description):
        self.tender_id = tender_id
        self.description = description


def bids_for(desc, catalog, limits=CompletionLimits()):
    space = build_attribute_space(desc, [catalog])
    return generate_bids(Tender(desc.id, desc), catalog, space, limits)


def impls_of(candidate):
    return sorted(t.implementation for t in candidate.description.templates if t.implementation)


def with_tags(desc, node_id, tags):
    templates = tuple(replace(t, tags={**t.tags, **tags}) if t.id == node_id else t for t in desc.templates)
    return replace(desc, templates=templates)


# -- completion --------------------------------------------------------------------


def test_dual_catalog_gives_vm_and_managed(partial, dual_catalog):
    candidates = complete_description(partial, dual_catalog)
    managed = [c for c in candidates if c.uses_managed_services]
    vm = [c for c in candidates if not c.uses_managed_services]
    assert len(candidates) == 6 and len(managed) == 2 and len(vm) == 4
    for c in managed:
        db = c.description.template("schema.dbms_host")
        assert db.implementation == "amazon-rds-mysql"
        assert not any(t.id.startswith("schema.dbms_host.") for t in c.description.templates)
    for c in vm:
        assert c.description.template("schema.dbms_host.os_host.compute_host").type == "Compute"


def test_candidates_complete_and_valid(partial, dual_catalog):
    for c in complete_description(partial, dual_catalog):
        validate_description(c.description)
        assert open_requirements(c.description) == []
        assert all(dual_catalog.get(impl) is not None for _, impl in c.substitutions)


def test_new_nodes_inherit_tier_and_hosting(partial, dual_catalog):
    c = complete_description(partial, dual_catalog)[0]
    assert c.description.template("apache.os_host").tier == "web"
    assert c.description.template("schema.dbms_host").tier == "db"
    rels = {(r.source, r.target): r.kind for r in c.description.relationships}
    assert rels[("apache", "apache.os_host")] == "hosted_on"


@pytest.mark.parametrize("catalog_name", ["catalog-dual-mode", "catalog-vm-only", "catalog-gpu"])
def test_completion_matches_brute_force(partial, catalog_name):
    catalog = parse_catalog(fixtures.read(catalog_name))
    engine = {frozenset(c.substitutions) for c in complete_description(partial, catalog)}
    assert engine == catalog_completions(partial, catalog)


def test_complete_description_single_empty_candidate(full, dual_catalog):
    candidates = complete_description(full, dual_catalog)
    assert len(candidates) == 1 and candidates[0].substitutions == ()


def test_unsatisfiable_gives_nothing(partial):
    only_os = ProviderCatalog("p", (NodeTypeImplementation("ubuntu", "OperatingSystem", frozenset({"os_host"})),))
    assert complete_description(partial, only_os) == []


def test_depth_limit_abandons_branches(partial, dual_catalog):
    notes = []
    assert complete_description(partial, dual_catalog, CompletionLimits(max_depth=1), diagnostics=notes) == []
    assert any("depth" in n for n in notes)


def test_candidate_limit(partial, dual_catalog):
    assert len(complete_description(partial, dual_catalog, CompletionLimits(max_candidates=2))) == 2


def test_cyclic_requirements_terminate():
    desc = description_from_dict({
        "format_version": 1, "id": "loop", "node_types": [{"name": "App", "requirements": ["r"]}],
        "templates": [{"id": "app", "type": "App"}],
    })
    looping = ProviderCatalog("loop", (NodeTypeImplementation("x", "X", frozenset({"r"}), frozenset({"r"})),))
    notes = []
    assert complete_description(desc, looping, diagnostics=notes) == []
    assert notes == ["app.r.r.r.r.r.r.r.r.r: closure depth 8 exceeded, branch abandoned"]


def test_accept_list_branches(dual_catalog):
    desc = parse_description(fixtures.read("sugarcrm-partial"))
    data = desc.to_dict()
    data["templates"].append({"id": "db", "type": "DBMS", "accept": ["mysql-5.5", "amazon-rds-mysql"],
                              "requirements": {}, "tags": {}})
    data["templates"][3]["requirements"] = {"dbms_host": "db"}
    tender = description_from_dict(data)
    candidates = complete_description(tender, dual_catalog)
    chosen = {dict(c.substitutions)[("db", IMPLEMENTATION_CHOICE)] for c in candidates}
    assert chosen == {"mysql-5.5", "amazon-rds-mysql"}


@st.composite
def sub_catalogs(draw):
    base = parse_catalog(fixtures.read("catalog-dual-mode"))
    extra = parse_catalog(fixtures.read("catalog-vm-only"))
    pool = {i.name: i for i in base.implementations + extra.implementations}
    names = draw(st.sets(st.sampled_from(sorted(pool)), min_size=1))
    return ProviderCatalog("p", tuple(pool[n] for n in sorted(names)), {n: Decimal("0.01") for n in names})


@given(sub_catalogs())
@settings(max_examples=60)
def test_completion_oracle_property(catalog):
    partial = parse_description(fixtures.read("sugarcrm-partial"))
    candidates = complete_description(partial, catalog, CompletionLimits(max_candidates=1000))
    assert {frozenset(c.substitutions) for c in candidates} == catalog_completions(partial, catalog)
    for c in candidates:
        assert c.description.complete


@given(sub_catalogs(), st.data())
@settings(max_examples=60)
def test_adding_implementations_keeps_candidates(catalog, data):
    partial = parse_description(fixtures.read("sugarcrm-partial"))
    names = [i.name for i in catalog.implementations]
    keep = data.draw(st.sets(st.sampled_from(names)))
    smaller = ProviderCatalog("p", tuple(i for i in catalog.implementations if i.name in keep), catalog.price_table)
    limits = CompletionLimits(max_candidates=1000)
    before = {frozenset(c.substitutions) for c in complete_description(partial, smaller, limits)}
    after = {frozenset(c.substitutions) for c in complete_description(partial, catalog, limits)}
    assert before <= after


# -- pricing -----------------------------------------------------------------------


def test_price_is_additive():
    catalog = ProviderCatalog("p", (), {"a": Decimal("0.10"), "b": Decimal("0.25")})
    desc = description_from_dict({
        "format_version": 1, "id": "d", "node_types": [{"name": "T"}],
        "templates": [{"id": "x", "type": "T", "implementation": "a"}, {"id": "y", "type": "T", "implementation": "b"}],
    })
    assert price_candidate(CompletionCandidate(desc), catalog) == Decimal("0.35")


def test_price_empty():
    desc = description_from_dict({"format_version": 1, "id": "d"})
    assert price_candidate(CompletionCandidate(desc), ProviderCatalog("p")) == Decimal("0")


def test_unpriced_implementation(partial, dual_catalog):
    candidate = complete_description(partial, dual_catalog)[0]
    unpriced = ProviderCatalog("p", dual_catalog.implementations,
                               {k: v for k, v in dual_catalog.price_table.items() if k != "m1.large"})
    assert "m1.large" in impls_of(candidate)
    with pytest.raises(PricingError, match="m1.large"):
        price_candidate(candidate, unpriced)


# -- bids ----------------------------------------------------------------------------


def test_fixture_bids(partial, dual_catalog):
    bids = bids_for(partial, dual_catalog)
    # Independently: VM stack = 2 x m1.small (0.06); managed = m1.small + hosted db (0.10).
    assert [b.price for b in bids] == [Decimal("0.12"), Decimal("0.16"), Decimal("0.30"), Decimal("0.30")]
    assert [b.summary["managed_services"] for b in bids] == ["false", "true", "false", "false"]
    assert [b.bid_id for b in bids] == [f"sugarcrm-partial/aws/{k}" for k in range(1, 5)]
    for b in bids:
        assert b.summary["price"] == str(b.price)
        assert b.price == sum(dual_catalog.price_table[i] for i in impls_of(b.candidate))


def test_complete_tender_prices_pinned_topology(full, dual_catalog):
    bids = bids_for(full, dual_catalog)
    assert len(bids) == 1 and bids[0].price == Decimal("0.30")


def test_worked_example_no_bids(example_space):
    tender = parse_description(fixtures.read("example-tender"))
    catalog = parse_catalog(fixtures.read("example-catalog"))
    assert generate_bids(Tender("T-n", tender), catalog, example_space) == []


def test_max_bids(partial, dual_catalog):
    assert len(bids_for(partial, dual_catalog, CompletionLimits(max_bids=1))) == 1


def test_bids_deterministic(partial, dual_catalog):
    first = [b.to_dict() for b in bids_for(partial, dual_catalog)]
    assert first == [b.to_dict() for b in bids_for(partial, dual_catalog)]


def test_bid_round_trip(partial, dual_catalog):
    for b in bids_for(partial, dual_catalog):
        assert Bid.from_dict(b.to_dict()) == b


def test_bid_rejects_negative_price(partial, dual_catalog):
    data = bids_for(partial, dual_catalog)[0].to_dict()
    data["price"] = "-1"
    with pytest.raises(ValueError):
        Bid.from_dict(data)


# -- coprocessor filtering ---------------------------------------------------------------


def test_optional_gpu_profile_keeps_both(partial, gpu_catalog):
    tender = with_tags(partial, "apache", GPU_TAGS)
    bids = bids_for(tender, gpu_catalog)
    accelerated = [b for b in bids if b.summary["accelerated"] == "true"]
    plain = [b for b in bids if b.summary["accelerated"] == "false"]
    assert accelerated and plain
    gpu_bid = accelerated[0]
    node, facts = gpu_bid.candidate.accelerator_assignments[0]
    assert node == "apache.os_host.compute_host"
    assert facts["assigned.cards"] == "2" and facts["assigned.cores"] == "896"
    # c1.medium for the database, cg1.4xlarge plus two cards at 0.50 for the web tier.
    assert gpu_bid.price == Decimal("0.13") + Decimal("1.30") + 2 * Decimal("0.50")


def test_required_gpu_without_accelerators(partial, vm_catalog):
    tender = with_tags(partial, "apache", {**GPU_TAGS, "gpu.support": "required"})
    assert complete_description(tender, vm_catalog)
    assert bids_for(tender, vm_catalog) == []


def test_required_gpu_filters_web_tier(partial, gpu_catalog):
    tender = with_tags(partial, "apache", {**GPU_TAGS, "gpu.support": "required"})
    bids = bids_for(tender, gpu_catalog)
    assert bids
    for b in bids:
        assert b.candidate.description.template("apache.os_host.compute_host").implementation == "cg1.4xlarge"


def test_single_card_policy_prices_one_card(partial, gpu_catalog):
    tender = with_tags(partial, "apache", {**GPU_TAGS, "gpu.support": "required", "gpu.multiCardSupport": "false"})
    b = bids_for(tender, gpu_catalog)[0]
    assert dict(b.candidate.accelerator_assignments)["apache.os_host.compute_host"]["assigned.cards"] == "1"
    assert b.price == Decimal("0.13") + Decimal("1.30") + Decimal("0.50")


def test_classad_expression_filters(partial, gpu_catalog):
    tender = with_tags(partial, "apache", {"classad.requirements": GPU_CLASSAD})
    candidates = [apply_constraints(c) for c in complete_description(tender, gpu_catalog)]
    kept = [c for c in candidates if c is not None]
    assert kept and len(kept) < len(candidates)
    for c in kept:
        assert c.description.template("apache.os_host.compute_host").implementation == "cg1.4xlarge"


# -- eligibility gate ---------------------------------------------------------------------


@st.composite
def gate_cases(draw):
    m, p = draw(st.integers(1, 4)), draw(st.integers(1, 3))
    cap = np.array(draw(st.lists(st.lists(st.integers(0, 1), min_size=p, max_size=p), min_size=m, max_size=m)))
    accepts = [draw(st.one_of(st.none(), st.sets(st.integers(0, p - 1), min_size=1))) for _ in range(m)]
    return m, p, cap, accepts


@given(gate_cases())
@settings(max_examples=150)
def test_eligibility_gate(case):
    m, p, cap, accepts = case
    space = AttributeSpace.uniform(m, p)
    impls = tuple(
        NodeTypeImplementation(f"a{i + 1},{j + 1}", f"A{i + 1}", frozenset({f"c{i + 1}"}))
        for i in range(m) for j in range(p) if cap[i, j]
    )
    catalog = ProviderCatalog("s", impls, {i.name: Decimal("0.01") for i in impls})
    types = [{"name": f"A{i + 1}", "capabilities": [f"c{i + 1}"]} for i in range(m)]
    types.append({"name": "Service", "requirements": [f"c{i + 1}" for i in range(m)]})
    templates, bound, req = [], {}, []
    for i, acc in enumerate(accepts):
        if acc is None:
            req.append([-1] * p)
            continue
        templates.append({"id": f"n{i + 1}", "type": f"A{i + 1}", "accept": [f"a{i + 1},{j + 1}" for j in sorted(acc)]})
        bound[f"c{i + 1}"] = f"n{i + 1}"
        req.append([1 if j in acc else 0 for j in range(p)])
    templates.append({"id": "service", "type": "Service", "requirements": bound})
    desc = description_from_dict({"format_version": 1, "id": "t", "node_types": types, "templates": templates})
    bids = generate_bids(Tender("t", desc), catalog, space)
    ok = all(v != 0 for v in naive_match(cap.tolist(), req))
    assert bool(bids) == ok
    for b in bids:
        assert b.candidate.description.complete
