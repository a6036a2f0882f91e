"""
Core data model for probabilistic pushdown automata (pPDA) and their
stateless subclass (pBPA): parsing, validation, normalization and the
one-step transition relation.

Stacks are stored top-first: the configuration pXYZ has stack ("X", "Y", "Z").
"""

import itertools
import logging
from collections.abc import Hashable, Iterator, Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from .constants import FRESH_PREFIX, PBPA_STATE
from .errors import ModelError, ParseError
from .syntax import TokenStream

logger = logging.getLogger(__name__)

State = Hashable
Symbol = Hashable


def show(item: Any) -> str:
    """Compact rendering of (possibly tuple-valued) states and symbols."""
    if isinstance(item, tuple):
        return "(" + ",".join(show(x) for x in item) + ")"
    if isinstance(item, frozenset):
        return "{" + ",".join(sorted(show(x) for x in item)) + "}"
    return str(item)


class Head(NamedTuple):
    state: State
    symbol: Symbol

    def __str__(self) -> str:
        return f"{show(self.state)}.{show(self.symbol)}"


class Configuration(NamedTuple):
    state: State
    stack: Tuple[Symbol, ...] = ()

    @property
    def head(self) -> Optional[Head]:
        return Head(self.state, self.stack[0]) if self.stack else None

    def __str__(self) -> str:
        word = " ".join(show(x) for x in self.stack) if self.stack else "eps"
        return f"{show(self.state)}: {word}"


@dataclass(frozen=True)
class Rule:
    lhs: Head
    rhs_state: State
    rhs_stack: Tuple[Symbol, ...]
    prob: Fraction

    @property
    def kind(self) -> str:
        return ("pop", "swap", "push")[len(self.rhs_stack)] if len(self.rhs_stack) <= 2 else "long"

    def __str__(self) -> str:
        rhs = " ".join(show(x) for x in self.rhs_stack) or "eps"
        return f"{self.lhs.state} {show(self.lhs.symbol)} -> {self.prob} {show(self.rhs_state)} {rhs}"


@dataclass(frozen=True)
class PPDA:
    states: Tuple[State, ...]
    alphabet: Tuple[Symbol, ...]
    rules: Tuple[Rule, ...]
    # fresh symbol -> text of the rule it was split from (diagnostics only)
    fresh_origin: Mapping[Symbol, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        states, symbols = set(self.states), set(self.alphabet)
        if len(states) != len(self.states) or len(symbols) != len(self.alphabet):
            raise ModelError("duplicate control state or stack symbol")
        seen = set()
        for rule in self.rules:
            if rule.lhs.state not in states or rule.rhs_state not in states:
                raise ModelError(f"unknown control state in rule {rule}")
            if rule.lhs.symbol not in symbols or any(x not in symbols for x in rule.rhs_stack):
                raise ModelError(f"unknown stack symbol in rule {rule}")
            if not 0 < rule.prob <= 1:
                raise ModelError(f"probability {rule.prob} outside (0,1] in rule {rule}")
            key = (rule.lhs, rule.rhs_state, rule.rhs_stack)
            if key in seen:
                raise ModelError(f"duplicate rule {rule}")
            seen.add(key)

    @cached_property
    def rules_by_head(self) -> Dict[Head, Tuple[Rule, ...]]:
        table: Dict[Head, List[Rule]] = {h: [] for h in self.heads}
        for rule in self.rules:
            table[rule.lhs].append(rule)
        return {h: tuple(rs) for h, rs in table.items()}

    @cached_property
    def heads(self) -> Tuple[Head, ...]:
        return tuple(Head(p, x) for p in self.states for x in self.alphabet)

    @cached_property
    def stuck_heads(self) -> frozenset:
        return frozenset(h for h, rs in self.rules_by_head.items() if not rs)

    @property
    def is_pbpa(self) -> bool:
        return len(self.states) == 1

    @property
    def is_normalized(self) -> bool:
        return all(len(r.rhs_stack) <= 2 for r in self.rules)

    def outgoing(self, head: Head) -> Tuple[Rule, ...]:
        return self.rules_by_head.get(head, ())

    def is_dead(self, c: Configuration) -> bool:
        return not c.stack or c.head in self.stuck_heads

    def require_normalized(self) -> None:
        if not self.is_normalized:
            raise ModelError("operation requires a normalized system (right-hand sides of length <= 2)")


class HeadSum(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    head: str
    total: Fraction


class ValidationReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    violations: List[HeadSum] = []
    stuck_heads: List[str] = []
    pbpa: bool = False
    rules: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(ppda: PPDA) -> ValidationReport:
    totals: Dict[Head, Fraction] = {}
    for rule in ppda.rules:
        totals[rule.lhs] = totals.get(rule.lhs, Fraction(0)) + rule.prob
    violations = [
        HeadSum(head=str(h), total=t) for h, t in totals.items() if t not in (0, 1)
    ]
    return ValidationReport(
        violations=violations,
        stuck_heads=sorted(str(h) for h in ppda.stuck_heads),
        pbpa=ppda.is_pbpa,
        rules=len(ppda.rules),
    )


def parse_ppda(text: str) -> PPDA:
    """
    Parses the system description format:

        ppda                     | pbpa
        states p q;              (ppda only)
        alphabet Z I D;
        p X -> 1/2 q Y Z;        (pbpa: X -> 1/2 Y Z;  pop: X -> 1/2 eps;)
    """
    ts = TokenStream(text)
    header = ts.ident("header 'ppda' or 'pbpa'")
    if header.text not in ("ppda", "pbpa"):
        ts.error("system must start with 'ppda' or 'pbpa'", header)
    pbpa = header.text == "pbpa"

    states: List[str] = [PBPA_STATE] if pbpa else []
    alphabet: List[str] = []
    rules: List[Rule] = []
    seen: Dict[tuple, Any] = {}

    def declare(target: List[str], what: str):
        for tok in ts.until(";"):
            if tok.kind != "ident":
                ts.error(f"expected {what} name", tok)
            if tok.text.startswith(FRESH_PREFIX):
                ts.error(f"names starting with {FRESH_PREFIX!r} are reserved", tok)
            if tok.text in target:
                ts.error(f"duplicate {what} {tok.text}", tok)
            target.append(tok.text)

    def known(tok, table: List[str], what: str) -> str:
        if tok.kind != "ident" or tok.text not in table:
            ts.error(f"unknown {what} {tok.text!r}", tok)
        return tok.text

    while not ts.at_end():
        if ts.accept("states"):
            if pbpa:
                ts.error("a pbpa has no 'states' declaration")
            declare(states, "control state")
        elif ts.accept("alphabet"):
            declare(alphabet, "stack symbol")
        else:
            start = ts.peek()
            if not states and not pbpa:
                ts.error("'states' must be declared before rules", start)
            if not alphabet:
                ts.error("'alphabet' must be declared before rules", start)
            p = PBPA_STATE if pbpa else known(ts.next(), states, "control state")
            x = known(ts.next(), alphabet, "stack symbol")
            ts.expect("->")
            prob_tok = ts.peek()
            prob = ts.rational()
            if not 0 < prob <= 1:
                ts.error(f"probability {prob} outside (0,1]", prob_tok)
            if pbpa:
                q = PBPA_STATE
            else:
                q = known(ts.next(), states, "control state")
            rhs = []
            for tok in ts.until(";"):
                if tok.text == "eps" and tok.kind == "ident" and "eps" not in alphabet:
                    continue
                rhs.append(known(tok, alphabet, "stack symbol"))
            key = (p, x, q, tuple(rhs))
            if key in seen:
                ts.error("duplicate rule for the same left- and right-hand side", start)
            seen[key] = True
            rules.append(Rule(Head(p, x), q, tuple(rhs), prob))

    if not alphabet:
        raise ParseError("missing 'alphabet' declaration")
    if not states:
        raise ParseError("missing 'states' declaration")
    return PPDA(tuple(states), tuple(alphabet), tuple(rules))


def render_ppda(ppda: PPDA) -> str:
    """Inverse of parse_ppda for systems whose names are plain strings."""
    lines = ["pbpa" if ppda.is_pbpa and ppda.states == (PBPA_STATE,) else "ppda"]
    pbpa = lines[0] == "pbpa"
    if not pbpa:
        lines.append("states " + " ".join(map(show, ppda.states)) + ";")
    lines.append("alphabet " + " ".join(map(show, ppda.alphabet)) + ";")
    for r in ppda.rules:
        rhs = " ".join(map(show, r.rhs_stack)) or "eps"
        if pbpa:
            lines.append(f"{show(r.lhs.symbol)} -> {r.prob} {rhs};")
        else:
            lines.append(f"{show(r.lhs.state)} {show(r.lhs.symbol)} -> {r.prob} {show(r.rhs_state)} {rhs};")
    return "\n".join(lines) + "\n"


def normalize(ppda: PPDA) -> PPDA:
    """
    Splits every rule pX -x-> q Y1..Yk with k >= 3 into pX -x-> q Y' Yk and
    qY' -1-> q Y1..Y(k-1), recursing on the second rule. Y' is a fresh stack
    symbol per split, so the fresh head qY' has exactly one rule and no
    control state is added (a pBPA stays a pBPA). The usual construction
    routes the split through a fresh control state instead; both add one
    probability-one step per split and preserve every until and
    acceptance probability.
    """
    if ppda.is_normalized:
        return ppda
    counter = itertools.count(1)
    alphabet = list(ppda.alphabet)
    taken = set(alphabet)
    origin: Dict[Symbol, str] = dict(ppda.fresh_origin)
    rules: List[Rule] = []

    def fresh(rule_text: str) -> str:
        while True:
            name = f"{FRESH_PREFIX}{next(counter)}"
            if name not in taken:
                taken.add(name)
                alphabet.append(name)
                origin[name] = rule_text
                return name

    for rule in ppda.rules:
        text = str(rule)
        lhs, prob, stack = rule.lhs, rule.prob, rule.rhs_stack
        while len(stack) > 2:
            y = fresh(text)
            rules.append(Rule(lhs, rule.rhs_state, (y, stack[-1]), prob))
            lhs, prob, stack = Head(rule.rhs_state, y), Fraction(1), stack[:-1]
        rules.append(Rule(lhs, rule.rhs_state, stack, prob))

    logger.debug("normalized %d rules into %d (%d fresh symbols)", len(ppda.rules), len(rules), len(origin))
    return PPDA(ppda.states, tuple(alphabet), tuple(rules), origin)


def successors(ppda: PPDA, c: Configuration) -> List[Tuple[Configuration, Fraction]]:
    if not c.stack:
        return []
    rest = c.stack[1:]
    return [
        (Configuration(r.rhs_state, r.rhs_stack + rest), r.prob)
        for r in ppda.outgoing(c.head)
    ]


def enumerate_configurations(ppda: PPDA, max_len: int, symbols: Optional[Sequence[Symbol]] = None) -> Iterator[Configuration]:
    """All configurations with stack length <= max_len, shortest first."""
    symbols = tuple(symbols if symbols is not None else ppda.alphabet)
    for n in range(max_len + 1):
        for p in ppda.states:
            for stack in itertools.product(symbols, repeat=n):
                yield Configuration(p, stack)
