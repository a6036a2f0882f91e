"""
PCTL over regular valuations, and the model checker for its qualitative
fragment. Satisfaction sets are computed bottom-up over the formula and
returned as Δ-automata; the temporal operators work on simple sets, so
regular operands are first pushed through the reg-sim product. Operands
that are boolean combinations of simple atoms skip the product.

Grammar (loosest first):

    φ ::= φ U[rel ρ] φ          right-associative
        | φ '|' φ
        | φ & φ
        | !φ  |  X[rel ρ] φ
        | tt | ff | name | (φ)

    rel ρ ::= <= ρ | < ρ | >= ρ | > ρ | =0 | =1
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

from .constants import FRESH_PREFIX
from .equations import BULLET, Polynomial, VarId, pop_targets
from .errors import ModelError
from .model import PPDA, Head
from .regsets import (
    EPS,
    DeltaAutomaton,
    SimpleSet,
    bool_ops,
    complement,
    empty,
    explore,
    from_topdown,
    map_back,
    parse_automaton_block,
    reduce_to_simple,
    universal,
)
from .setexpr import as_automaton, parse_set
from .solver import ONE, ZERO, DecisionQuery, Oracle, Rel
from .syntax import TokenStream

logger = logging.getLogger(__name__)

RESERVED = ("tt", "ff", "X", "U")


# --- formulas ----------------------------------------------------------------

@dataclass(frozen=True)
class TT:
    def __str__(self) -> str:
        return "tt"


@dataclass(frozen=True)
class FF:
    def __str__(self) -> str:
        return "ff"


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Not:
    arg: "Formula"

    def __str__(self) -> str:
        return f"!{self.arg}"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} & {self.right})"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} | {self.right})"


def threshold_text(rel: Rel, bound: Fraction) -> str:
    return f"{rel.value}{bound}"


@dataclass(frozen=True)
class Next:
    rel: Rel
    bound: Fraction
    arg: "Formula"

    def __str__(self) -> str:
        return f"X[{threshold_text(self.rel, self.bound)}] {self.arg}"


@dataclass(frozen=True)
class Until:
    rel: Rel
    bound: Fraction
    left: "Formula"
    right: "Formula"

    def __str__(self) -> str:
        return f"({self.left} U[{threshold_text(self.rel, self.bound)}] {self.right})"


Formula = Union[TT, FF, Atom, Not, And, Or, Next, Until]
Temporal = Union[Next, Until]


def is_qualitative(phi: Formula) -> bool:
    """Every threshold is 0 or 1 (so `<1` and `>0`, the negation duals, count too)."""
    if isinstance(phi, (Next, Until)) and phi.bound not in (ZERO, ONE):
        return False
    return all(is_qualitative(child) for child in children(phi))


def children(phi: Formula) -> Tuple[Formula, ...]:
    if isinstance(phi, (Not, Next)):
        return (phi.arg,)
    if isinstance(phi, (And, Or, Until)):
        return (phi.left, phi.right)
    return ()


def atoms_of(phi: Formula) -> frozenset:
    if isinstance(phi, Atom):
        return frozenset([phi.name])
    return frozenset().union(*(atoms_of(c) for c in children(phi)))


def parse_formula(text: str) -> Formula:
    ts = TokenStream(text)
    phi = _until(ts)
    if not ts.at_end():
        ts.error(f"unexpected {ts.peek().text!r} after formula")
    return phi


def _until(ts: TokenStream) -> Formula:
    left = _or(ts)
    if ts.accept("U"):
        rel, bound = _threshold(ts)
        return Until(rel, bound, left, _until(ts))
    return left


def _or(ts: TokenStream) -> Formula:
    phi = _and(ts)
    while ts.accept("|"):
        phi = Or(phi, _and(ts))
    return phi


def _and(ts: TokenStream) -> Formula:
    phi = _unary(ts)
    while ts.accept("&"):
        phi = And(phi, _unary(ts))
    return phi


def _unary(ts: TokenStream) -> Formula:
    if ts.accept("!"):
        return Not(_unary(ts))
    if ts.at("X") and ts.peek(1).text == "[":
        ts.next()
        rel, bound = _threshold(ts)
        return Next(rel, bound, _unary(ts))
    return _primary(ts)


def _primary(ts: TokenStream) -> Formula:
    if ts.accept("("):
        phi = _until(ts)
        ts.expect(")")
        return phi
    if ts.accept("tt"):
        return TT()
    if ts.accept("ff"):
        return FF()
    tok = ts.ident("formula")
    if tok.text in RESERVED:
        ts.error(f"{tok.text!r} is reserved", tok)
    if tok.text.startswith(FRESH_PREFIX):
        ts.error(f"names starting with {FRESH_PREFIX!r} are reserved", tok)
    return Atom(tok.text)


def _threshold(ts: TokenStream) -> Tuple[Rel, Fraction]:
    ts.expect("[")
    tok = ts.next()
    if tok.text == "=":
        bound = ts.rational()
        if bound not in (ZERO, ONE):
            ts.error(f"'=' only takes 0 or 1, not {bound}", tok)
        rel = Rel.LE if bound == 0 else Rel.GE
    elif tok.kind == "op" and tok.text in ("<", "<=", ">=", ">"):
        rel = Rel(tok.text)
        num = ts.peek()
        bound = ts.rational()
        if not 0 <= bound <= 1:
            ts.error(f"threshold {bound} outside [0,1]", num)
    else:
        ts.error(f"expected a relation, found {tok.text or 'end of input'!r}", tok)
    ts.expect("]")
    return rel, bound


# --- valuations --------------------------------------------------------------

@dataclass(frozen=True)
class RegularValuation:
    ppda: PPDA
    atoms: Mapping[str, DeltaAutomaton] = field(default_factory=dict)
    # atoms bound to a simple set literal, by name
    simple: Mapping[str, SimpleSet] = field(default_factory=dict)

    def __post_init__(self):
        for name, aut in self.atoms.items():
            if set(aut.control_states) != set(self.ppda.states) or set(aut.alphabet) != set(self.ppda.alphabet):
                raise ModelError(f"valuation of {name!r} is not over the system's control states and alphabet")

    def __getitem__(self, name: str) -> DeltaAutomaton:
        if name not in self.atoms:
            raise ModelError(f"atomic proposition {name!r} has no valuation")
        return self.atoms[name]

    def with_atom(self, name: str, aut: DeltaAutomaton, simple: Optional[SimpleSet] = None) -> "RegularValuation":
        rest = {k: v for k, v in self.simple.items() if k != name}
        return RegularValuation(self.ppda, {**self.atoms, name: aut}, {**rest, **({name: simple} if simple else {})})


def parse_valuation(text: str, ppda: PPDA) -> RegularValuation:
    """
    Automaton blocks (see regsets.parse_automata) and atom bindings:

        atom atZ = {Z};
        atom goal = @reach + {p.eps};

    Every automaton is also an atom of the same name unless rebound.
    """
    ts = TokenStream(text)
    automata: Dict[str, DeltaAutomaton] = {}
    atoms: Dict[str, DeltaAutomaton] = {}
    simple: Dict[str, SimpleSet] = {}
    while not ts.at_end():
        if ts.accept("automaton"):
            tok = ts.ident("automaton name")
            if tok.text in automata:
                ts.error(f"automaton {tok.text} defined twice", tok)
            automata[tok.text] = parse_automaton_block(ts, ppda, tok.text)
        elif ts.accept("atom"):
            tok = ts.ident("atomic proposition")
            if tok.text in RESERVED or tok.text.startswith(FRESH_PREFIX):
                ts.error(f"{tok.text!r} cannot name an atomic proposition", tok)
            if tok.text in atoms:
                ts.error(f"atom {tok.text} bound twice", tok)
            ts.expect("=")
            s = parse_set(ts, ppda, automata, terminator=";")
            if isinstance(s, SimpleSet):
                simple[tok.text] = s
            atoms[tok.text] = as_automaton(s, ppda)
            ts.expect(";")
        else:
            ts.error(f"expected 'automaton' or 'atom', found {ts.peek().text!r}")
    return RegularValuation(ppda, {**automata, **atoms}, simple)


# --- negation-free form ------------------------------------------------------

def negation_free(phi: Formula, nu: RegularValuation) -> Tuple[Formula, RegularValuation]:
    """
    Pushes negations to the atoms, where ¬a becomes a fresh atom valued by
    the complement automaton. Thresholds of negated temporal nodes flip to
    the dual relation.
    """
    extra: Dict[str, DeltaAutomaton] = {}
    extra_simple: Dict[str, SimpleSet] = {}

    def push(node: Formula, negate: bool) -> Formula:
        if isinstance(node, Not):
            return push(node.arg, not negate)
        if isinstance(node, (TT, FF)):
            if not negate:
                return node
            return FF() if isinstance(node, TT) else TT()
        if isinstance(node, Atom):
            if not negate:
                return node
            name = f"{FRESH_PREFIX}not_{node.name}"
            if name not in extra:
                extra[name] = complement(nu[node.name])
                if node.name in nu.simple:
                    extra_simple[name] = complement_simple(nu.simple[node.name], nu.ppda)
            return Atom(name)
        if isinstance(node, (And, Or)):
            left, right = push(node.left, negate), push(node.right, negate)
            dual = isinstance(node, And) == negate
            return Or(left, right) if dual else And(left, right)
        rel = node.rel.negated if negate else node.rel
        if isinstance(node, Next):
            return Next(rel, node.bound, push(node.arg, False))
        return Until(rel, node.bound, push(node.left, False), push(node.right, False))

    result = push(phi, False)
    return result, RegularValuation(nu.ppda, {**nu.atoms, **extra}, {**nu.simple, **extra_simple})


# --- satisfaction sets -------------------------------------------------------

TemporalCase = Callable[[PPDA, Temporal, Tuple[SimpleSet, ...]], DeltaAutomaton]


def complement_simple(s: SimpleSet, ppda: PPDA) -> SimpleSet:
    return SimpleSet(SimpleSet.everything(ppda).base - s.base)


def trivial_threshold(rel: Rel, bound: Fraction) -> Optional[bool]:
    """True (False) when `P ~ bound` holds for every (no) probability P."""
    if (rel is Rel.GE and bound <= 0) or (rel is Rel.LE and bound >= 1):
        return True
    if (rel is Rel.GT and bound >= 1) or (rel is Rel.LT and bound <= 0):
        return False
    return None


def satisfaction_set(ppda: PPDA, phi: Formula, nu: RegularValuation, temporal: TemporalCase) -> DeltaAutomaton:
    """
    Bottom-up evaluation shared by the exact and the error-tolerant checker;
    they differ only in `temporal`, which receives the product system and
    the simple images of the operands.
    """
    ppda.require_normalized()
    memo: Dict[Formula, DeltaAutomaton] = {}

    def simple(node: Formula) -> Optional[SimpleSet]:
        # boolean combinations of simple atoms stay simple
        if isinstance(node, TT):
            return SimpleSet.everything(ppda)
        if isinstance(node, FF):
            return SimpleSet()
        if isinstance(node, Atom):
            return nu.simple.get(node.name)
        if isinstance(node, Not):
            arg = simple(node.arg)
            return None if arg is None else complement_simple(arg, ppda)
        if isinstance(node, (And, Or)):
            left, right = simple(node.left), simple(node.right)
            if left is None or right is None:
                return None
            return SimpleSet(left.base & right.base if isinstance(node, And) else left.base | right.base)
        return None

    def sat(node: Formula) -> DeltaAutomaton:
        if node in memo:
            return memo[node]
        if isinstance(node, TT):
            result = universal(ppda)
        elif isinstance(node, FF):
            result = empty(ppda)
        elif isinstance(node, Atom):
            result = nu[node.name]
        elif isinstance(node, Not):
            result = complement(sat(node.arg))
        elif isinstance(node, And):
            result = bool_ops(sat(node.left), sat(node.right), "intersect")
        elif isinstance(node, Or):
            result = bool_ops(sat(node.left), sat(node.right), "union")
        else:
            trivial = trivial_threshold(node.rel, node.bound)
            if trivial is not None:
                result = universal(ppda) if trivial else empty(ppda)
            elif all(simple(c) is not None for c in children(node)):
                result = temporal(ppda, node, tuple(simple(c) for c in children(node)))
            else:
                operands = [sat(c) for c in children(node)]
                red = reduce_to_simple(ppda, operands)
                result = map_back(red, temporal(red.product, node, red.simple_images))
                logger.debug("%s: %d automaton states", node, len(result.states))
        memo[node] = result
        return result

    return sat(phi)


_QUALITATIVE_MODES = {
    (Rel.GE, ONE): ("=1", False),
    (Rel.LT, ONE): ("=1", True),
    (Rel.LE, ZERO): ("=0", False),
    (Rel.GT, ZERO): ("=0", True),
}


def check_qualitative(
    ppda: PPDA, phi: Formula, nu: RegularValuation, oracle: Optional[Oracle] = None
) -> DeltaAutomaton:
    """Δ-automaton accepting exactly the configurations satisfying φ."""
    if not is_qualitative(phi):
        raise ModelError(f"{phi} is not in the qualitative fragment")
    oracle = oracle or Oracle()

    def temporal(product: PPDA, node: Temporal, images: Tuple[SimpleSet, ...]) -> DeltaAutomaton:
        key = (node.rel, node.bound)
        if key not in _QUALITATIVE_MODES:
            raise ModelError(f"threshold {threshold_text(*key)} is not qualitative")
        mode, negate = _QUALITATIVE_MODES[key]
        if isinstance(node, Next):
            aut = sat_next_qual(product, images[0], mode)
        elif mode == "=1":
            aut = sat_until_eq1(product, images[0], images[1], oracle)
        else:
            aut = sat_until_eq0(product, images[0], images[1], oracle)
        return complement(aut) if negate else aut

    return satisfaction_set(ppda, phi, nu, temporal)


# --- next --------------------------------------------------------------------

def next_automaton(ppda: PPDA, c: SimpleSet, accept: Callable[[Fraction, Fraction], bool]) -> DeltaAutomaton:
    """
    Accepts pα iff accept(mass of successors in c, total mass) holds. A
    successor's membership in c depends on the top two symbols (a pop
    exposes the second), so the automaton remembers the last two read.
    """
    ppda.require_normalized()
    verdicts: Dict[tuple, bool] = {}

    def verdict(label) -> bool:
        p, top, second = label
        if top is None:
            return accept(ZERO, ZERO)
        if label not in verdicts:
            mass = total = ZERO
            for r in ppda.outgoing(Head(p, top)):
                total += r.prob
                if r.rhs_stack:
                    pair = (r.rhs_state, r.rhs_stack[0])
                else:
                    pair = (r.rhs_state, second if second is not None else EPS)
                if pair in c.base:
                    mass += r.prob
            verdicts[label] = accept(mass, total)
        return verdicts[label]

    return explore(
        ppda.states,
        ppda.alphabet,
        {p: (p, None, None) for p in ppda.states},
        lambda label, x: (label[0], x, label[1]),
        verdict,
    )


def sat_next_qual(ppda: PPDA, c: SimpleSet, mode: str) -> DeltaAutomaton:
    if mode == "=1":
        return next_automaton(ppda, c, lambda mass, total: total > 0 and mass == total)
    if mode == "=0":
        return next_automaton(ppda, c, lambda mass, total: mass == 0)
    raise ModelError(f"unknown qualitative mode {mode!r}")


# --- until -------------------------------------------------------------------

def sat_until_eq1(ppda: PPDA, c1: SimpleSet, c2: SimpleSet, oracle: Optional[Oracle] = None) -> DeltaAutomaton:
    """
    Subset construction over sets T of control states, reading the stack
    top-down: T moves on X to the union of R(qX) when every q in T reaches
    C2 with probability one either before popping X or through one of the
    pop targets; T is final when every qε is in C2.
    """
    oracle = oracle or Oracle()
    sys = oracle.system(ppda, c1, c2)
    bounds = oracle.bounds(sys)
    truth = bounds.truth
    memo: Dict[Head, bool] = {}

    def sums_to_one(head: Head) -> bool:
        if head not in memo:
            # variables outside the Boolean least solution are exactly 0
            parts = [VarId(head, BULLET)] + [VarId(head, r) for r in pop_targets(truth, head, ppda.states)]
            expr = Polynomial()
            for v in parts:
                if v in truth:
                    expr = expr + sys.variable(v)
            expr = expr.substitute(bounds.exact)
            if expr.is_constant:
                memo[head] = expr.constant_term >= 1
            else:
                label = f"[{head},bullet] + sum of [{head},r] over pop targets >= 1"
                memo[head] = oracle.holds(DecisionQuery(sys, expr, Rel.GE, ONE, label=label))
        return memo[head]

    def step(t: frozenset, x) -> Optional[frozenset]:
        target = set()
        for q in t:
            head = Head(q, x)
            if not sums_to_one(head):
                return None
            target |= pop_targets(truth, head, ppda.states)
        return frozenset(target)

    return from_topdown(
        ppda.states,
        ppda.alphabet,
        {p: frozenset([p]) for p in ppda.states},
        step,
        lambda t: all(c2.has_eps(q) for q in t),
    )


def sat_until_eq0(ppda: PPDA, c1: SimpleSet, c2: SimpleSet, oracle: Optional[Oracle] = None) -> DeltaAutomaton:
    """
    Same subset construction with the exact Boolean step condition
    [qX•] = 0; T is final when no qε is in C2.
    """
    oracle = oracle or Oracle()
    sys = oracle.system(ppda, c1, c2)
    truth = oracle.bounds(sys).truth

    def step(t: frozenset, x) -> Optional[frozenset]:
        target = set()
        for q in t:
            head = Head(q, x)
            if VarId(head, BULLET) in truth:
                return None
            target |= pop_targets(truth, head, ppda.states)
        return frozenset(target)

    return from_topdown(
        ppda.states,
        ppda.alphabet,
        {p: frozenset([p]) for p in ppda.states},
        step,
        lambda t: not any(c2.has_eps(q) for q in t),
    )
