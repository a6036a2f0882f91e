"""
Error-tolerant quantitative PCTL for pBPA.

For an until node the termination values [X,ε] and [X,•] of every symbol
are bracketed until words over S = {X | [X,ε] ≠ 1} of length n are long
enough that the rest of the stack matters by at most λ/3. The satisfying
set is then approximated by the words over S (symbols outside S are
transparent) whose bracketed probability clears the threshold.
"""

import itertools
import logging
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict

from .constants import MAX_G_WORDS, MAX_PARAM_PASSES
from .equations import BULLET, MonotoneSystem, Polynomial, VarId
from .errors import ModelError, OracleUnknown
from .intervals import Interval
from .model import PPDA, Configuration, Head, Symbol, show
from .pctl import Formula, Next, RegularValuation, Temporal, negation_free, next_automaton, satisfaction_set
from .regsets import DeltaAutomaton, SimpleSet, from_topdown, map_back, reduce_to_simple
from .solver import ONE, ZERO, DecisionQuery, Oracle, Rel, Verdict, check_configuration

logger = logging.getLogger(__name__)

Word = Tuple[Symbol, ...]

# trie state standing for "the first n S-symbols matched a member of G"
_ALL = "all"


class ApproxParams(BaseModel):
    """Brackets and word length for one until node."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    symbols: Tuple[Any, ...]
    n: int
    kappa: Fraction
    nu: Fraction
    lam: Fraction
    eps: Dict[Any, Interval]
    bullet: Dict[Any, Interval]
    empty_in_target: bool
    passes: int
    trace: List[Tuple[Fraction, Optional[int]]] = []


class Answer(str, Enum):
    YES = "YES"
    NO = "NO"


class UntilSummary(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    formula: str
    n: int
    kappa: Fraction
    nu: Fraction
    symbols: int
    words: int
    passes: int


class ToleranceVerdict(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    answer: Answer
    lam: Fraction
    formula: str
    configuration: str
    untils: List[UntilSummary] = []


def least_power(kappa: Fraction, target: Fraction) -> int:
    """Least n >= 1 with kappa^n <= target, for 0 <= kappa < 1 and target > 0."""
    if kappa == 0:
        return 1
    hi = 1
    while kappa ** hi > target:
        hi *= 2
    lo = hi // 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if kappa ** mid <= target:
            hi = mid
        else:
            lo = mid
    return hi


def _halve(oracle: Oracle, sys: MonotoneSystem, expr: Polynomial, b: Interval, label: str) -> Interval:
    mid = b.midpoint
    answer = oracle.decide(DecisionQuery(sys, expr, Rel.GE, mid, label=f"{label} >= {mid}"))
    if answer.verdict is Verdict.TRUE:
        return Interval(mid, b.hi)
    if answer.verdict is Verdict.FALSE:
        return Interval(b.lo, mid)
    # undecided at the midpoint: narrow through the certified bracket instead
    narrowed = b.intersect(oracle.bracket(sys, expr, b.width / 2))
    if narrowed.width > b.width / 2:
        oracle.warn(f"{label} only narrowed to {narrowed}")
    return narrowed


def compute_params(
    pbpa: PPDA,
    c1: SimpleSet,
    c2: SimpleSet,
    lam,
    oracle: Optional[Oracle] = None,
    max_passes: int = MAX_PARAM_PASSES,
) -> ApproxParams:
    """
    S from the exact tests [X,ε] >= 1, then bisection passes over every
    bracket of S until κ < 1 and n(ν + ν(n+1)(1+ν)^n) <= λ/3.
    """
    lam = Fraction(lam)
    if not pbpa.is_pbpa:
        raise ModelError("error-tolerant checking needs a pBPA (one control state)")
    if not 0 < lam < 1:
        raise ModelError(f"tolerance {lam} outside (0,1)")
    oracle = oracle or Oracle()
    sys = oracle.system(pbpa, c1, c2)
    bounds = oracle.bounds(sys)
    p = pbpa.states[0]

    def expr(v: VarId) -> Polynomial:
        return sys.variable(v).substitute(bounds.exact)

    def eps_var(x: Symbol) -> VarId:
        return VarId(Head(p, x), p)

    def bullet_var(x: Symbol) -> VarId:
        return VarId(Head(p, x), BULLET)

    symbols: List[Symbol] = []
    for x in pbpa.alphabet:
        e = expr(eps_var(x))
        if e.is_constant:
            terminates = e.constant_term >= 1
        else:
            terminates = oracle.holds(DecisionQuery(sys, e, Rel.GE, ONE, label=f"[{show(x)},eps] >= 1"))
        if not terminates:
            symbols.append(x)

    brackets: Dict[VarId, Interval] = {}
    for x in symbols:
        for v in (eps_var(x), bullet_var(x)):
            e = expr(v)
            brackets[v] = Interval.point(e.constant_term) if e.is_constant else Interval.unit()

    target = lam / 3
    nu = ONE
    trace: List[Tuple[Fraction, Optional[int]]] = []
    for passes in range(1, max_passes + 1):
        for v, b in brackets.items():
            if not b.is_point:
                brackets[v] = _halve(oracle, sys, expr(v), b, f"[{show(v.head.symbol)},{'bullet' if v.is_bullet else 'eps'}]")
        nu = max(nu / 2, max((b.width for b in brackets.values()), default=ZERO))
        kappa = max((brackets[eps_var(x)].hi for x in symbols), default=ZERO)
        if kappa >= 1:
            trace.append((kappa, None))
            continue
        n = least_power(kappa, target)
        if trace and trace[-1][1] is not None and n > trace[-1][1]:
            raise AssertionError(f"word length grew from {trace[-1][1]} to {n}")
        trace.append((kappa, n))
        logger.debug("pass %d: kappa=%s n=%d nu=%s", passes, kappa, n, nu)
        if n * (nu + nu * (n + 1) * (1 + nu) ** n) <= target:
            return ApproxParams(
                symbols=tuple(symbols),
                n=n,
                kappa=kappa,
                nu=nu,
                lam=lam,
                eps={x: brackets[eps_var(x)] for x in symbols},
                bullet={x: brackets[bullet_var(x)] for x in symbols},
                empty_in_target=c2.has_eps(p),
                passes=passes,
                trace=trace,
            )
    raise OracleUnknown(
        f"parameter loop for {c1} U {c2} did not converge in {max_passes} passes",
        hint="use --backend external",
    )


def restrict_word(alpha: Sequence[Symbol], symbols) -> Word:
    keep = set(symbols)
    return tuple(x for x in alpha if x in keep)


def word_probability(params: ApproxParams, beta: Sequence[Symbol], upper: bool) -> Fraction:
    """P(ε) = [ε in C2];  P(Xβ) = [X,•] + [X,ε]·P(β), over upper or lower brackets."""
    value = ONE if params.empty_in_target else ZERO
    for x in reversed(beta):
        e, b = params.eps[x], params.bullet[x]
        value = b.hi + e.hi * value if upper else b.lo + e.lo * value
    return value


def build_G(params: ApproxParams, rho, direction: Rel) -> FrozenSet[Word]:
    """
    Words over S of length at most n whose bracketed probability clears ρ;
    at length n the threshold is relaxed by λ/3 toward acceptance.
    """
    rho = Fraction(rho)
    k, n = len(params.symbols), params.n
    size = sum(k ** i for i in range(n + 1))
    if size > MAX_G_WORDS:
        raise ModelError(f"{size} candidate words over {k} symbols up to length {n}; raise the tolerance")
    slack = params.lam / 3
    words = set()
    for i in range(n + 1):
        for beta in itertools.product(params.symbols, repeat=i):
            if direction is Rel.GE:
                ok = word_probability(params, beta, True) >= (rho if i < n else rho - slack)
            elif direction is Rel.LE:
                ok = word_probability(params, beta, False) <= (rho if i < n else rho + slack)
            else:
                raise ModelError(f"direction must be >= or <=, not {direction.value}")
            if ok:
                words.add(beta)
    return frozenset(words)


def build_threshold_automaton(G: FrozenSet[Word], params: ApproxParams, pbpa: PPDA) -> DeltaAutomaton:
    """
    Trie over G read top-down; symbols outside S leave the state unchanged,
    and once n S-symbols matched a member of G the rest is arbitrary.
    """
    S, n = set(params.symbols), params.n
    prefixes = {beta[:i] for beta in G for i in range(len(beta) + 1)}

    def step(state, x):
        if state == _ALL or x not in S:
            return state
        word = state + (x,)
        if len(word) == n:
            return _ALL if word in G else None
        return word if word in prefixes else None

    return from_topdown(
        pbpa.states,
        pbpa.alphabet,
        {p: () for p in pbpa.states},
        step,
        lambda state: state == _ALL or state in G,
    )


def sat_next_quant(pbpa: PPDA, c: Union[SimpleSet, DeltaAutomaton], rel: Rel, rho) -> DeltaAutomaton:
    """One-step probabilities are finite sums of rule probabilities, so this is exact."""
    rho = Fraction(rho)
    if isinstance(c, DeltaAutomaton):
        red = reduce_to_simple(pbpa, [c])
        return map_back(red, sat_next_quant(red.product, red.simple_images[0], rel, rho))
    return next_automaton(pbpa, c, lambda mass, total: rel.holds(mass, rho))


def error_tolerant_set(
    pbpa: PPDA,
    phi: Formula,
    nu: RegularValuation,
    lam,
    oracle: Optional[Oracle] = None,
) -> Tuple[DeltaAutomaton, Formula, List[UntilSummary]]:
    """
    A Δ-automaton containing every configuration that satisfies φ and only
    configurations that satisfy φ with every until threshold relaxed by λ,
    with the negation-free form of φ and one summary per until node.
    """
    lam = Fraction(lam)
    if not pbpa.is_pbpa:
        raise ModelError("error-tolerant checking needs a pBPA (one control state)")
    if not 0 < lam < 1:
        raise ModelError(f"tolerance {lam} outside (0,1)")
    oracle = oracle or Oracle()
    positive, nu = negation_free(phi, nu)
    summaries: List[UntilSummary] = []

    def temporal(product: PPDA, node: Temporal, images: Tuple[SimpleSet, ...]) -> DeltaAutomaton:
        if isinstance(node, Next):
            return sat_next_quant(product, images[0], node.rel, node.bound)
        params = compute_params(product, images[0], images[1], lam, oracle)
        direction = Rel.GE if node.rel in (Rel.GE, Rel.GT) else Rel.LE
        G = build_G(params, node.bound, direction)
        summaries.append(
            UntilSummary(
                formula=str(node), n=params.n, kappa=params.kappa, nu=params.nu,
                symbols=len(params.symbols), words=len(G), passes=params.passes,
            )
        )
        return build_threshold_automaton(G, params, product)

    return satisfaction_set(pbpa, positive, nu, temporal), positive, summaries


def check_error_tolerant(
    pbpa: PPDA,
    phi: Formula,
    nu: RegularValuation,
    c: Configuration,
    lam,
    oracle: Optional[Oracle] = None,
) -> ToleranceVerdict:
    """YES whenever c satisfies φ; a YES also means c satisfies φ relaxed by λ."""
    lam = Fraction(lam)
    check_configuration(pbpa, c)
    aut, positive, summaries = error_tolerant_set(pbpa, phi, nu, lam, oracle)
    answer = Answer.YES if c in aut else Answer.NO
    logger.debug("%s at %s with tolerance %s: %s", positive, c, lam, answer.value)
    return ToleranceVerdict(
        answer=answer, lam=lam, formula=str(positive), configuration=str(c), untils=summaries
    )
