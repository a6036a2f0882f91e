"""
The monotone quadratic equation system whose least solution gives the
until/termination probabilities ⟨pXq⟩ and ⟨pX•⟩, and its interpretations
over exact rationals and Booleans.
"""

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

from .errors import ModelError
from .model import PPDA, Configuration, Head, State, show
from .regsets import SimpleSet

logger = logging.getLogger(__name__)

BULLET = "•"


class VarId(NamedTuple):
    """⟨pXq⟩ (target = q) or ⟨pX•⟩ (target = BULLET)."""

    head: Head
    target: State

    @property
    def is_bullet(self) -> bool:
        return self.target == BULLET

    def __str__(self) -> str:
        target = "•" if self.is_bullet else show(self.target)
        return f"<{show(self.head.state)},{show(self.head.symbol)},{target}>"


def var_key(v: VarId) -> Tuple[str, str, int, str]:
    return (show(v.head.state), show(v.head.symbol), int(v.is_bullet), show(v.target))


Monomial = Tuple[VarId, ...]


class Polynomial:
    """Polynomial with rational coefficients; monomials are sorted tuples of VarIds."""

    __slots__ = ("terms",)

    def __init__(self, terms: Optional[Mapping[Monomial, Fraction]] = None):
        self.terms: Dict[Monomial, Fraction] = {m: Fraction(c) for m, c in (terms or {}).items() if c != 0}

    @classmethod
    def constant(cls, c) -> "Polynomial":
        return cls({(): Fraction(c)})

    @classmethod
    def var(cls, v: VarId, coeff=1) -> "Polynomial":
        return cls({(v,): Fraction(coeff)})

    def __add__(self, other: "Polynomial") -> "Polynomial":
        terms = dict(self.terms)
        for m, c in _coerce(other).terms.items():
            terms[m] = terms.get(m, Fraction(0)) + c
        return Polynomial(terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-_coerce(other))

    def __mul__(self, other) -> "Polynomial":
        other = _coerce(other)
        terms: Dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(sorted(m1 + m2, key=var_key))
                terms[m] = terms.get(m, Fraction(0)) + c1 * c2
        return Polynomial(terms)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(frozenset(self.terms.items()))

    @property
    def constant_term(self) -> Fraction:
        return self.terms.get((), Fraction(0))

    @property
    def degree(self) -> int:
        return max((len(m) for m in self.terms), default=0)

    @property
    def variables(self) -> FrozenSet[VarId]:
        return frozenset(v for m in self.terms for v in m)

    @property
    def is_constant(self) -> bool:
        return all(not m for m in self.terms)

    @property
    def is_monotone(self) -> bool:
        return all(c > 0 for m, c in self.terms.items() if m)

    def substitute(self, values: Mapping[VarId, Fraction]) -> "Polynomial":
        terms: Dict[Monomial, Fraction] = {}
        for m, c in self.terms.items():
            rest = []
            for v in m:
                if v in values:
                    c = c * values[v]
                else:
                    rest.append(v)
            if c != 0:
                key = tuple(rest)
                terms[key] = terms.get(key, Fraction(0)) + c
        return Polynomial(terms)

    def evaluate(self, value: Callable[[VarId], Fraction]) -> Fraction:
        total = Fraction(0)
        for m, c in self.terms.items():
            for v in m:
                c = c * value(v)
                if c == 0:
                    break
            total += c
        return total

    def holds(self, truth: Callable[[VarId], bool]) -> bool:
        """Boolean reading: some monomial with all variables true."""
        return any(all(truth(v) for v in m) for m, c in self.terms.items() if c > 0)

    def sorted_terms(self) -> List[Tuple[Monomial, Fraction]]:
        return sorted(self.terms.items(), key=lambda t: (len(t[0]), [var_key(v) for v in t[0]]))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            factors = ([] if c == 1 and m else [str(c)]) + [str(v) for v in m]
            parts.append("*".join(factors))
        return " + ".join(parts)

    __repr__ = __str__


def _coerce(x) -> Polynomial:
    return x if isinstance(x, Polynomial) else Polynomial.constant(x)


@dataclass(frozen=True, eq=False)
class MonotoneSystem:
    """
    x = F(x) over the free variables; pinned variables are constants that
    have already been substituted into every right-hand side.
    """

    ppda: PPDA
    c1: SimpleSet
    c2: SimpleSet
    vars: Tuple[VarId, ...]
    rhs: Mapping[VarId, Polynomial]
    pinned: Mapping[VarId, Fraction]

    def poly(self, v: VarId) -> Polynomial:
        """Right-hand side of v, or its pinned constant."""
        if v in self.pinned:
            return Polynomial.constant(self.pinned[v])
        return self.rhs[v]

    def variable(self, v: VarId) -> Polynomial:
        """v as an expression: the pinned constant, or the variable itself."""
        if v in self.pinned:
            return Polynomial.constant(self.pinned[v])
        return Polynomial.var(v)

    def pop(self, head: Head, q: State) -> VarId:
        return VarId(head, q)

    def bullet(self, head: Head) -> VarId:
        return VarId(head, BULLET)

    def dump(self) -> str:
        lines = [f"{v} := {self.pinned[v]}" for v in sorted(self.pinned, key=var_key)]
        lines += [f"{v} = {self.rhs[v]}" for v in self.vars]
        return "\n".join(lines) + "\n"


def build_until_system(ppda: PPDA, c1: SimpleSet, c2: SimpleSet) -> MonotoneSystem:
    """
    ⟨pXq⟩ = 0 unless pX ∈ G1∖G2; otherwise the push, swap and pop terms.
    ⟨pX•⟩ = 1 if pX ∈ G2, 0 if pX ∉ G1 ∪ G2; otherwise push and swap terms.
    Only the heads of C1 and C2 matter here; ε-membership enters through the
    dynamic program of until_expression.
    """
    ppda.require_normalized()
    g1, g2 = c1.heads, c2.heads
    states = ppda.states
    pinned: Dict[VarId, Fraction] = {}
    raw: Dict[VarId, Polynomial] = {}

    for head in ppda.heads:
        rules = ppda.outgoing(head)
        for q in states:
            v = VarId(head, q)
            if head not in g1 or head in g2:
                pinned[v] = Fraction(0)
                continue
            poly = Polynomial()
            for r in rules:
                if r.kind == "pop" and r.rhs_state == q:
                    poly = poly + Polynomial.constant(r.prob)
                elif r.kind == "swap":
                    poly = poly + Polynomial.var(VarId(Head(r.rhs_state, r.rhs_stack[0]), q), r.prob)
                elif r.kind == "push":
                    y, z = r.rhs_stack
                    for t in states:
                        poly = poly + r.prob * Polynomial.var(VarId(Head(r.rhs_state, y), t)) * Polynomial.var(VarId(Head(t, z), q))
            raw[v] = poly
        b = VarId(head, BULLET)
        if head in g2:
            pinned[b] = Fraction(1)
        elif head not in g1:
            pinned[b] = Fraction(0)
        else:
            poly = Polynomial()
            for r in rules:
                if r.kind == "swap":
                    poly = poly + Polynomial.var(VarId(Head(r.rhs_state, r.rhs_stack[0]), BULLET), r.prob)
                elif r.kind == "push":
                    y, z = r.rhs_stack
                    inner = Polynomial.var(VarId(Head(r.rhs_state, y), BULLET))
                    for t in states:
                        inner = inner + Polynomial.var(VarId(Head(r.rhs_state, y), t)) * Polynomial.var(VarId(Head(t, z), BULLET))
                    poly = poly + r.prob * inner
            raw[b] = poly

    rhs = {v: p.substitute(pinned) for v, p in raw.items()}
    for v, p in rhs.items():
        if not p.is_monotone or not 0 <= p.constant_term <= 1 or p.degree > 2:
            raise ModelError(f"equation for {v} is not monotone quadratic: {p}")
    free = tuple(sorted(rhs, key=var_key))
    logger.debug("until system: %d free variables, %d pinned", len(free), len(pinned))
    return MonotoneSystem(ppda, c1, c2, free, rhs, pinned)


Valuation = Dict[VarId, Fraction]


def evaluate(sys: MonotoneSystem, v: Mapping[VarId, Fraction]) -> Valuation:
    """
    One application of F, clamped at 1. Clamping changes neither the least
    fixed point nor the set of post-fixed points below 1.
    """
    lookup = lambda u: sys.pinned[u] if u in sys.pinned else v[u]
    return {x: min(Fraction(1), sys.rhs[x].evaluate(lookup)) for x in sys.vars}


@dataclass(frozen=True)
class BooleanSystem:
    rhs: Mapping[VarId, Tuple[FrozenSet[VarId], ...]]
    pinned_true: FrozenSet[VarId]

    def least_fixed_point(self) -> FrozenSet[VarId]:
        """Saturation: variables true in the least solution."""
        true = set()
        waiting: Dict[VarId, List[Tuple[VarId, FrozenSet[VarId]]]] = {}
        queue = []
        for v, monos in self.rhs.items():
            for m in monos:
                if not m:
                    queue.append(v)
                for u in m:
                    waiting.setdefault(u, []).append((v, m))
        while queue:
            v = queue.pop()
            if v in true:
                continue
            true.add(v)
            for w, m in waiting.get(v, ()):
                if w not in true and all(u in true for u in m):
                    queue.append(w)
        return frozenset(true) | self.pinned_true


def boolean_abstraction(sys: MonotoneSystem) -> BooleanSystem:
    rhs = {v: tuple(frozenset(m) for m in sys.rhs[v].terms) for v in sys.vars}
    return BooleanSystem(rhs, frozenset(v for v, c in sys.pinned.items() if c > 0))


def until_expression(sys: MonotoneSystem, c: Configuration) -> Polynomial:
    """
    P(qε) = [qε ∈ C2];  P(qXβ) = ⟨qX•⟩ + Σ_t ⟨qXt⟩·P(tβ), expanded into a
    polynomial over the system's variables.
    """
    states = sys.ppda.states
    level: Dict[State, Polynomial] = {
        q: Polynomial.constant(1 if sys.c2.has_eps(q) else 0) for q in states
    }
    for x in reversed(c.stack):
        nxt = {}
        for q in states:
            head = Head(q, x)
            poly = sys.variable(VarId(head, BULLET))
            for t in states:
                if level[t].terms:
                    poly = poly + sys.variable(VarId(head, t)) * level[t]
            nxt[q] = poly
        level = nxt
    return level[c.state]


def pop_targets(truth: FrozenSet[VarId], head: Head, states: Iterable[State]) -> FrozenSet[State]:
    """R(pX) = {q | ⟨pXq⟩ > 0} read off a Boolean least fixed point."""
    return frozenset(q for q in states if VarId(head, q) in truth)
