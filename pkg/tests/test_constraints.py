import pytest
from hypothesis import given
from hypothesis import strategies as st

from reference_inputs import GPU_CLASSAD, GPU_TAGS, TWO_CARD_OFFER
from tenderbroker.model import (
    ConstraintError,
    ConstraintSyntaxError,
    CoprocessorConstraint,
    CoprocessorMatch,
    eval_coprocessor_constraint,
    evaluate_constraint,
    parse_constraint,
)
from tenderbroker.model.constraints import (
    Comparison,
    Conjunction,
    Literal,
    Name,
    Support,
    Truthy,
    classad_facts,
    parse_version,
)

LISTING = 'HAS_GPU && (GPU_API == "CUDA") && (GPU_NUM_CORES >= 16)'


def test_three_clause_conjunction():
    expr = parse_constraint(LISTING)
    assert expr == Conjunction((
        Truthy(Name("HAS_GPU")),
        Comparison(Name("GPU_API"), "==", Literal("CUDA")),
        Comparison(Name("GPU_NUM_CORES"), ">=", Literal(16.0)),
    ))


def test_classad_excerpt_verbatim():
    assert parse_constraint(GPU_CLASSAD) == parse_constraint(LISTING)


def test_constant_true():
    assert parse_constraint("true") == Truthy(Literal(True))
    assert evaluate_constraint(parse_constraint("true"), {}) is True


@pytest.mark.parametrize("text", ["GPU_NUM_CORES >", "", "(A == 1", "A == 1 &&", "A == == 1", "A ! B", "A || B"])
def test_syntax_errors(text):
    with pytest.raises(ConstraintSyntaxError):
        parse_constraint(text)


def test_syntax_error_position():
    with pytest.raises(ConstraintSyntaxError) as err:
        parse_constraint("A == 1 $")
    assert err.value.position == 7


def test_evaluate_listing():
    expr = parse_constraint(LISTING)
    assert evaluate_constraint(expr, {"HAS_GPU": "true", "GPU_API": "CUDA", "GPU_NUM_CORES": "448"})
    assert not evaluate_constraint(expr, {"HAS_GPU": "true", "GPU_API": "CUDA", "GPU_NUM_CORES": "8"})
    assert not evaluate_constraint(expr, {"HAS_GPU": "false", "GPU_API": "CUDA", "GPU_NUM_CORES": "448"})
    assert not evaluate_constraint(expr, {"GPU_API": "OpenCL", "HAS_GPU": "1", "GPU_NUM_CORES": "448"})


def test_undefined_is_false_and_case_insensitive():
    expr = parse_constraint("gpu_num_cores >= 16")
    assert not evaluate_constraint(expr, {})
    assert evaluate_constraint(expr, {"GPU_NUM_CORES": "16"})


def test_classad_facts_from_tags():
    facts = classad_facts(TWO_CARD_OFFER)
    assert facts["HAS_GPU"] == "true" and facts["GPU_API"] == "CUDA" and facts["GPU_NUM_CORES"] == "896"
    assert classad_facts({})["HAS_GPU"] == "false"


fact_values = st.one_of(st.integers(-100, 100).map(str), st.sampled_from(["true", "false", "CUDA", "x"]))


@given(st.dictionaries(st.sampled_from(["HAS_GPU", "GPU_API", "GPU_NUM_CORES", "other"]), fact_values))
def test_evaluation_total_and_deterministic(facts):
    expr = parse_constraint(LISTING)
    first = evaluate_constraint(expr, facts)
    assert isinstance(first, bool)
    assert evaluate_constraint(expr, facts) == first


# -- coprocessor profiles --------------------------------------------------------------


def test_profile_parsed_from_tags():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    assert c == CoprocessorConstraint(Support.OPTIONAL, "CUDA", (3,), 448, 5000, True)


def test_no_gpu_tags_no_profile():
    assert CoprocessorConstraint.from_tags({"colour": "red", "mic.support": "required"}) is None


def test_profile_rejects_inverted_core_range():
    with pytest.raises(ConstraintError):
        CoprocessorConstraint.from_tags({"gpu.minNumCores": "10", "gpu.maxNumCores": "5"})


def test_two_cards_aggregate_to_match():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    assert eval_coprocessor_constraint(c, TWO_CARD_OFFER) is CoprocessorMatch.MATCH


def test_optional_without_gpu():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    assert eval_coprocessor_constraint(c, {}) is CoprocessorMatch.MATCH_WITHOUT_ACCELERATOR


def test_required_without_gpu():
    c = CoprocessorConstraint.from_tags({**GPU_TAGS, "gpu.support": "required"})
    assert eval_coprocessor_constraint(c, {}) is CoprocessorMatch.NO_MATCH


def test_single_card_when_multi_card_forbidden():
    # 448 per card stays in range on one card; a 300-core card does not.
    c = CoprocessorConstraint.from_tags({**GPU_TAGS, "gpu.multiCardSupport": "false"})
    assert eval_coprocessor_constraint(c, TWO_CARD_OFFER) is CoprocessorMatch.MATCH
    assert eval_coprocessor_constraint(c, {**TWO_CARD_OFFER, "gpu.numCores": "300"}) is CoprocessorMatch.NO_MATCH
    allowed = CoprocessorConstraint.from_tags(GPU_TAGS)
    assert eval_coprocessor_constraint(allowed, {**TWO_CARD_OFFER, "gpu.numCores": "300"}) is CoprocessorMatch.MATCH


def test_too_many_cores():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    offer = {**TWO_CARD_OFFER, "gpu.numCores": "2688"}
    assert eval_coprocessor_constraint(c, offer) is CoprocessorMatch.NO_MATCH


def test_api_and_version():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    assert eval_coprocessor_constraint(c, {**TWO_CARD_OFFER, "gpu.api": "OpenCL"}) is CoprocessorMatch.NO_MATCH
    assert eval_coprocessor_constraint(c, {**TWO_CARD_OFFER, "gpu.apiVersion": "2.1"}) is CoprocessorMatch.NO_MATCH
    assert eval_coprocessor_constraint(c, {**TWO_CARD_OFFER, "gpu.apiVersion": "3"}) is CoprocessorMatch.MATCH


def test_support_none_ignores_accelerator():
    c = CoprocessorConstraint(Support.NONE)
    assert eval_coprocessor_constraint(c, TWO_CARD_OFFER) is CoprocessorMatch.MATCH_WITHOUT_ACCELERATOR


@pytest.mark.parametrize("a, b", [("3.0", "3"), ("3.0.0", "3"), ("10.1", "10.1.0")])
def test_version_normalization(a, b):
    assert parse_version(a) == parse_version(b)


def test_version_ordering():
    assert parse_version("3.10") > parse_version("3.9") > parse_version("3")


@pytest.mark.parametrize("bad", ["3.x", "", "v3", "3..0"])
def test_malformed_version(bad):
    with pytest.raises(ConstraintError):
        parse_version(bad)


def test_malformed_version_in_facts():
    c = CoprocessorConstraint.from_tags(GPU_TAGS)
    with pytest.raises(ConstraintError):
        eval_coprocessor_constraint(c, {**TWO_CARD_OFFER, "gpu.apiVersion": "five"})


@given(st.integers(1, 4096), st.integers(1, 8), st.booleans())
def test_core_window_property(per_card, cards, multi):
    c = CoprocessorConstraint.from_tags({**GPU_TAGS, "gpu.multiCardSupport": str(multi).lower()})
    offer = {**TWO_CARD_OFFER, "gpu.numCores": str(per_card), "gpu.numCards": str(cards)}
    total = per_card * (cards if multi else 1)
    expected = CoprocessorMatch.MATCH if 448 <= total <= 5000 else CoprocessorMatch.NO_MATCH
    assert eval_coprocessor_constraint(c, offer) is expected
