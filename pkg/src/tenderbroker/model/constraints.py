"""Coprocessor constraints: classad-style expressions and ``gpu.*`` tag profiles.

Expressions are conjunctions of comparisons, e.g.::

    HAS_GPU && (GPU_API == "CUDA") && (GPU_NUM_CORES >= 16)

and are evaluated against a flat ``name -> value`` fact map.  Identifiers are
looked up case-insensitively; a comparison involving an undefined identifier
is false.
"""
from __future__ import annotations

import enum
import operator
import re
from dataclasses import dataclass
from typing import Mapping, Union

from tenderbroker.model.description import ModelError


class ConstraintError(ModelError):
    pass


class ConstraintSyntaxError(ConstraintError):
    def __init__(self, msg: str, position: int):
        super().__init__(f"{msg} at position {position}")
        self.position = position


@dataclass(frozen=True)
class Literal:
    value: Union[str, float, bool]


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Truthy:
    operand: Union[Name, Literal]


@dataclass(frozen=True)
class Comparison:
    left: Union[Name, Literal]
    op: str
    right: Union[Name, Literal]


@dataclass(frozen=True)
class Conjunction:
    clauses: tuple


Expression = Union[Truthy, Comparison, Conjunction]

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<number>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)
      | (?P<op>&&|==|!=|>=|<=|>|<|\(|\))
      | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
    )""",
    re.VERBOSE,
)

_COMPARE = {
    "==": operator.eq,
    "!=": operator.ne,
    ">=": operator.ge,
    "<=": operator.le,
    ">": operator.gt,
    "<": operator.lt,
}


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            at = len(text) - len(text[pos:].lstrip())
            raise ConstraintSyntaxError(f"unexpected character {text[at]!r}", at)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ConstraintSyntaxError("unexpected end of expression", len(self.text))
        self.i += 1
        return tok

    def conjunction(self) -> Expression:
        clauses = [self.clause()]
        while (tok := self.peek()) is not None and tok[1] == "&&":
            self.take()
            clauses.append(self.clause())
        flat = []
        for c in clauses:
            flat.extend(c.clauses if isinstance(c, Conjunction) else (c,))
        return flat[0] if len(flat) == 1 else Conjunction(tuple(flat))

    def clause(self) -> Expression:
        tok = self.peek()
        if tok is not None and tok[1] == "(":
            self.take()
            inner = self.conjunction()
            closing = self.take()
            if closing[1] != ")":
                raise ConstraintSyntaxError("expected ')'", closing[2])
            return inner
        left = self.operand()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] in _COMPARE:
            self.take()
            return Comparison(left, tok[1], self.operand())
        return Truthy(left)

    def operand(self) -> Union[Name, Literal]:
        kind, value, pos = self.take()
        if kind == "string":
            return Literal(bytes(value[1:-1], "utf-8").decode("unicode_escape"))
        if kind == "number":
            return Literal(float(value))
        if kind == "ident":
            if value.lower() in ("true", "false"):
                return Literal(value.lower() == "true")
            return Name(value)
        raise ConstraintSyntaxError(f"expected an operand, got {value!r}", pos)


def parse_constraint(text: str) -> Expression:
    """Parse a conjunction of comparisons.

    A leading ``Requirements =`` and backslash line continuations are accepted
    so that classad excerpts can be pasted verbatim.
    """
    body = re.sub(r"\\\s*\n", " ", text)
    body = re.sub(r"^\s*Requirements\s*=(?!=)", lambda m: " " * len(m.group(0)), body)
    parser = _Parser(body)
    if parser.peek() is None:
        raise ConstraintSyntaxError("empty expression", 0)
    expr = parser.conjunction()
    if (tok := parser.peek()) is not None:
        raise ConstraintSyntaxError(f"unexpected {tok[1]!r}", tok[2])
    return expr


class _Undefined:
    pass


UNDEFINED = _Undefined()


def _resolve(operand, facts: Mapping[str, str]):
    if isinstance(operand, Literal):
        return operand.value
    lowered = {k.lower(): v for k, v in facts.items()}
    return lowered.get(operand.name.lower(), UNDEFINED)


def _coerce(value):
    if isinstance(value, (bool, float)):
        return value
    text = str(value).strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return float(text)
    except ValueError:
        return text


def evaluate_constraint(expr: Expression, facts: Mapping[str, str]) -> bool:
    if isinstance(expr, Conjunction):
        return all(evaluate_constraint(c, facts) for c in expr.clauses)
    if isinstance(expr, Truthy):
        value = _resolve(expr.operand, facts)
        if value is UNDEFINED:
            return False
        value = _coerce(value)
        return value is True or (isinstance(value, float) and value != 0.0)
    left, right = _resolve(expr.left, facts), _resolve(expr.right, facts)
    if left is UNDEFINED or right is UNDEFINED:
        return False
    left, right = _coerce(left), _coerce(right)
    if type(left) is not type(right):
        return expr.op == "!="
    if isinstance(left, bool) and expr.op not in ("==", "!="):
        return False
    return _COMPARE[expr.op](left, right)


def classad_facts(tags: Mapping[str, str]) -> dict[str, str]:
    """Add the classad names (``HAS_GPU``, ``GPU_API``, ...) derived from ``gpu.*`` tags."""
    facts = dict(tags)
    if offers_accelerator(tags):
        facts.setdefault("HAS_GPU", "true")
        cards = int(tags.get("gpu.numCards", "1"))
        if "gpu.api" in tags:
            facts.setdefault("GPU_API", tags["gpu.api"])
        if "gpu.numCores" in tags:
            facts.setdefault("GPU_NUM_CORES", str(int(tags["gpu.numCores"]) * cards))
    else:
        facts.setdefault("HAS_GPU", "false")
    return facts


# Tender-side profile keys.  Offerings describe themselves with gpu.api,
# gpu.apiVersion, gpu.numCores (per card), gpu.numCards and gpu.model.
CONSTRAINT_TAGS = frozenset(
    {
        "gpu.support",
        "gpu.cudaSupport",
        "gpu.minCudaVersion",
        "gpu.minApiVersion",
        "gpu.minNumCores",
        "gpu.maxNumCores",
        "gpu.multiCardSupport",
    }
)


def offers_accelerator(facts: Mapping[str, str]) -> bool:
    return "gpu.api" in facts or "gpu.numCores" in facts


class Support(str, enum.Enum):
    REQUIRED = "required"
    OPTIONAL = "optional"
    NONE = "none"


class CoprocessorMatch(str, enum.Enum):
    MATCH = "match"
    MATCH_WITHOUT_ACCELERATOR = "match_without_accelerator"
    NO_MATCH = "no_match"


def parse_version(text: str) -> tuple[int, ...]:
    if not re.fullmatch(r"\d+(\.\d+)*", text.strip()):
        raise ConstraintError(f"malformed version {text!r}")
    parts = [int(p) for p in text.strip().split(".")]
    while len(parts) > 1 and parts[-1] == 0:
        parts.pop()
    return tuple(parts)


def _int(tags: Mapping[str, str], key: str) -> int | None:
    if key not in tags:
        return None
    try:
        return int(tags[key])
    except ValueError as exc:
        raise ConstraintError(f"{key} must be an integer, got {tags[key]!r}") from exc


def _bool(value: str) -> bool:
    return value.strip().lower() in ("true", "yes", "1")


@dataclass(frozen=True)
class CoprocessorConstraint:
    support: Support = Support.NONE
    api: str | None = None
    min_api_version: tuple[int, ...] | None = None
    min_cores: int | None = None
    max_cores: int | None = None
    multi_card_allowed: bool = False

    def __post_init__(self) -> None:
        if self.min_cores is not None and self.max_cores is not None and self.min_cores > self.max_cores:
            raise ConstraintError("gpu.minNumCores exceeds gpu.maxNumCores")

    @classmethod
    def from_tags(cls, tags: Mapping[str, str]) -> "CoprocessorConstraint | None":
        """Read the ``gpu.*`` profile of a node; None when it carries no gpu tags."""
        gpu = {k: v for k, v in tags.items() if k in CONSTRAINT_TAGS}
        if not gpu:
            return None
        try:
            support = Support(gpu.get("gpu.support", "required").strip().lower())
        except ValueError as exc:
            raise ConstraintError(f"unknown gpu.support value {gpu['gpu.support']!r}") from exc
        api = "CUDA" if _bool(gpu.get("gpu.cudaSupport", "false")) else None
        version = gpu.get("gpu.minCudaVersion", gpu.get("gpu.minApiVersion"))
        return cls(
            support=support,
            api=api,
            min_api_version=parse_version(version) if version is not None else None,
            min_cores=_int(gpu, "gpu.minNumCores"),
            max_cores=_int(gpu, "gpu.maxNumCores"),
            multi_card_allowed=_bool(gpu.get("gpu.multiCardSupport", "false")),
        )


def offered_cores(constraint: CoprocessorConstraint, facts: Mapping[str, str]) -> tuple[int, int]:
    """(cards used, total cores) for an accelerator offering."""
    per_card = _int(facts, "gpu.numCores") or 0
    cards = _int(facts, "gpu.numCards") or 1
    used = cards if constraint.multi_card_allowed else 1
    return used, per_card * used


def eval_coprocessor_constraint(
    constraint: CoprocessorConstraint, facts: Mapping[str, str]
) -> CoprocessorMatch:
    if constraint.support is Support.NONE:
        return CoprocessorMatch.MATCH_WITHOUT_ACCELERATOR
    if not offers_accelerator(facts):
        if constraint.support is Support.OPTIONAL:
            return CoprocessorMatch.MATCH_WITHOUT_ACCELERATOR
        return CoprocessorMatch.NO_MATCH

    if constraint.api is not None and facts.get("gpu.api", "").lower() != constraint.api.lower():
        return CoprocessorMatch.NO_MATCH
    if constraint.min_api_version is not None:
        version = facts.get("gpu.apiVersion")
        if version is None or parse_version(version) < constraint.min_api_version:
            return CoprocessorMatch.NO_MATCH
    _, cores = offered_cores(constraint, facts)
    if constraint.min_cores is not None and cores < constraint.min_cores:
        return CoprocessorMatch.NO_MATCH
    if constraint.max_cores is not None and cores > constraint.max_cores:
        return CoprocessorMatch.NO_MATCH
    return CoprocessorMatch.MATCH
