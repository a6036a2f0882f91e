"""
Certified brackets of least fixed points and the decision oracle built on
them.

Lower bounds come from Kleene iteration F^k(0) rounded down to dyadic
rationals; upper bounds are post-fixed points (F(u) <= u), which always lie
above the least solution. Components that are linear once their
dependencies are known exactly are solved by elimination, and components
that are zero in the Boolean abstraction are exactly zero.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from . import smt
from .constants import DYADIC_BITS, KLEENE_CHUNK, SNAP_DENOMINATOR_LIMIT
from .equations import (
    BULLET,
    MonotoneSystem,
    Polynomial,
    Valuation,
    VarId,
    boolean_abstraction,
    build_until_system,
    evaluate,
    until_expression,
    var_key,
)
from .errors import ModelError, OracleUnknown, SolverError
from .graphs import strongly_connected_components
from .intervals import Interval, round_down, round_up
from .model import PPDA, Configuration, Head, show
from .regsets import SimpleSet
from .settings import Settings

logger = logging.getLogger(__name__)

ONE = Fraction(1)
ZERO = Fraction(0)


class Rel(str, Enum):
    LT = "<"
    LE = "<="
    EQ = "="
    GE = ">="
    GT = ">"

    @classmethod
    def parse(cls, text: str) -> "Rel":
        try:
            return cls(text.strip())
        except ValueError:
            raise ModelError(f"unknown relation {text!r}") from None

    @property
    def flipped(self) -> "Rel":
        """a ~ b  iff  b ~flipped a."""
        return {Rel.LT: Rel.GT, Rel.LE: Rel.GE, Rel.EQ: Rel.EQ, Rel.GE: Rel.LE, Rel.GT: Rel.LT}[self]

    @property
    def negated(self) -> "Rel":
        if self is Rel.EQ:
            raise ModelError("'=' has no single negation")
        return {Rel.LT: Rel.GE, Rel.LE: Rel.GT, Rel.GE: Rel.LT, Rel.GT: Rel.LE}[self]

    def holds(self, a: Fraction, b: Fraction) -> bool:
        return {
            Rel.LT: a < b, Rel.LE: a <= b, Rel.EQ: a == b, Rel.GE: a >= b, Rel.GT: a > b,
        }[self]

    def on_interval(self, value: Interval, b: Fraction) -> Optional[bool]:
        """Decides `x ~ b` for every x in the bracket, or None if the bracket straddles."""
        lo, hi = value
        if self.holds(lo, b) and self.holds(hi, b):
            return True
        if not self.holds(lo, b) and not self.holds(hi, b):
            # both ends fail; for "=" the bracket may still contain b
            if self is Rel.EQ and lo <= b <= hi:
                return None
            return False
        return None


class Verdict(str, Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @classmethod
    def of(cls, value: Optional[bool]) -> "Verdict":
        if value is None:
            return cls.UNKNOWN
        return cls.TRUE if value else cls.FALSE

    def as_bool(self) -> Optional[bool]:
        return None if self is Verdict.UNKNOWN else self is Verdict.TRUE


class Backend(str, Enum):
    AUTO = "auto"
    INTERVALS = "intervals"
    EXTERNAL = "external"


@dataclass(frozen=True)
class DecisionQuery:
    """`expr ~ bound`, or `expr ~ rhs` when rhs is given, over the least solution of system."""

    system: MonotoneSystem
    expr: Polynomial
    rel: Rel
    bound: Fraction = ZERO
    rhs: Optional[Polynomial] = None
    label: Optional[str] = None

    def sides(self) -> Tuple[Polynomial, Polynomial]:
        return self.expr, self.rhs if self.rhs is not None else Polynomial.constant(self.bound)

    def monotone_form(self) -> Optional[Tuple[Polynomial, str, Fraction]]:
        """(e, rel, b) with e monotone and the query equivalent to e ~ b, if one exists."""
        lhs, rhs = self.sides()
        diff = lhs - rhs
        c = diff.constant_term
        rest = diff - Polynomial.constant(c)
        coeffs = list(rest.terms.values())
        if all(x > 0 for x in coeffs):
            return rest, self.rel.value, -c
        if all(x < 0 for x in coeffs):
            return -rest, self.rel.flipped.value, c
        return None

    def __str__(self) -> str:
        if self.label:
            return self.label
        lhs, rhs = self.sides()
        return f"{lhs} {self.rel.value} {rhs}"


class OracleAnswer(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    verdict: Verdict
    backend: str
    witness: Optional[Interval] = None
    detail: Optional[str] = None

    @property
    def decided(self) -> bool:
        return self.verdict is not Verdict.UNKNOWN


class OracleStats(BaseModel):
    oracle_calls: int = 0
    external_calls: int = 0
    iterations: int = 0
    refinements: int = 0
    rounds: int = 0
    warnings: List[str] = []


def solve_linear(order: Sequence[VarId], polys: Dict[VarId, Polynomial]) -> Optional[Valuation]:
    """
    Solves x = A x + b exactly (polys linear in the variables of order).
    Returns None when I - A is singular.
    """
    n = len(order)
    index = {v: i for i, v in enumerate(order)}
    rows = []
    for v in order:
        row = [ZERO] * (n + 1)
        row[index[v]] += 1
        for mono, c in polys[v].terms.items():
            if not mono:
                row[n] += c
            else:
                row[index[mono[0]]] -= c
        rows.append(row)
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            return None
        rows[col], rows[pivot] = rows[pivot], rows[col]
        p = rows[col][col]
        rows[col] = [x / p for x in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return {v: rows[index[v]][n] for v in order}


class KleeneRun(NamedTuple):
    values: Valuation
    iterations: int
    converged: bool


class UpperBound(NamedTuple):
    values: Valuation
    reached: bool


class SystemBounds:
    """
    Incrementally refined lower/upper valuations of one system. Free
    variables hold dyadic lower bounds and a certified post-fixed upper
    valuation; exact variables hold their value.
    """

    def __init__(self, sys: MonotoneSystem, settings: Settings, stats: Optional[OracleStats] = None):
        self.sys = sys
        self.settings = settings
        self.stats = stats if stats is not None else OracleStats()
        self.truth: FrozenSet[VarId] = boolean_abstraction(sys).least_fixed_point()
        self.exact: Dict[VarId, Fraction] = {v: ZERO for v in sys.vars if v not in self.truth}
        self._solve_linear_components()
        self.free: Tuple[VarId, ...] = tuple(v for v in sys.vars if v not in self.exact)
        self.rhs = {v: sys.rhs[v].substitute(self.exact) for v in self.free}
        self.lower: Valuation = {v: ZERO for v in self.free}
        self.upper: Valuation = {v: ONE for v in self.free}
        self.iterations = 0
        self.exhausted = False
        logger.debug(
            "bounds: %d variables, %d exact, %d left to iterate",
            len(sys.vars), len(self.exact), len(self.free),
        )

    def _solve_linear_components(self) -> None:
        graph = {
            v: [u for u in self.sys.rhs[v].variables if u not in self.exact]
            for v in self.sys.vars
            if v not in self.exact
        }
        for comp in strongly_connected_components(graph):
            polys = {v: self.sys.rhs[v].substitute(self.exact) for v in comp}
            if any(p.degree > 1 or not p.variables <= comp for p in polys.values()):
                continue
            solution = solve_linear(sorted(comp, key=var_key), polys)
            if solution is None or any(not 0 <= x <= 1 for x in solution.values()):
                continue
            self.exact.update(solution)

    # --- valuations -----------------------------------------------------

    def apply(self, values: Valuation) -> Valuation:
        get = values.__getitem__
        return {v: min(ONE, self.rhs[v].evaluate(get)) for v in self.free}

    def value(self, v: VarId, upper: bool) -> Fraction:
        if v in self.sys.pinned:
            return self.sys.pinned[v]
        if v in self.exact:
            return self.exact[v]
        return self.upper[v] if upper else self.lower[v]

    def interval(self, v: VarId) -> Interval:
        return Interval(self.value(v, False), self.value(v, True))

    def lower_valuation(self) -> Valuation:
        return {v: self.value(v, False) for v in self.sys.vars}

    def upper_valuation(self) -> Valuation:
        return {v: self.value(v, True) for v in self.sys.vars}

    def gap(self) -> Fraction:
        return max((self.upper[v] - self.lower[v] for v in self.free), default=ZERO)

    def bracket(self, expr: Polynomial) -> Interval:
        """Bracket of a polynomial; negative coefficients take the opposite endpoint."""
        lo = hi = ZERO
        for mono, c in expr.terms.items():
            low_end = high_end = c
            for v in mono:
                a, b = self.value(v, False), self.value(v, True)
                low_end *= a if c > 0 else b
                high_end *= b if c > 0 else a
            lo += low_end
            hi += high_end
        return Interval(lo, hi)

    # --- refinement -----------------------------------------------------

    def _kleene(self, steps: int) -> None:
        for _ in range(steps):
            image = self.apply(self.lower)
            self.iterations += 1
            self.stats.iterations += 1
            if image == self.lower:
                # an exact fixed point below μ is μ itself
                self.upper = dict(self.lower)
                return
            self.lower = {v: round_down(x) for v, x in image.items()}

    def post_fixed(self, cand: Valuation) -> bool:
        image = self.apply(cand)
        return all(image[v] <= cand[v] for v in self.free)

    def _descend(self, u: Valuation, steps: int = KLEENE_CHUNK) -> Valuation:
        # stays post-fixed: F(min(u, ru(F(u)))) <= F(u) <= both arguments
        for _ in range(steps):
            image = self.apply(u)
            nxt = {v: min(u[v], round_up(image[v])) for v in self.free}
            if nxt == u:
                break
            u = nxt
        return u

    def _candidates(self, width: Fraction) -> Iterable[Valuation]:
        delta = width / 2
        snapped = {}
        for v in self.free:
            s = self.lower[v].limit_denominator(SNAP_DENOMINATOR_LIMIT)
            snapped[v] = s if s >= self.lower[v] else min(ONE, self.lower[v] + delta)
        yield snapped
        while delta < 1:
            yield {v: min(ONE, self.lower[v] + delta) for v in self.free}
            delta *= 2

    def _tighten_upper(self, width: Fraction) -> None:
        for cand in self._candidates(width):
            if self.post_fixed(cand):
                cand = self._descend(cand)
                # the minimum of two post-fixed points is post-fixed
                self.upper = {v: min(self.upper[v], cand[v]) for v in self.free}
                return

    def refine(self, width: Fraction) -> bool:
        """Narrows every free bracket to `width`; False when the iteration budget ran out first."""
        budget = self.settings.max_iterations
        while self.gap() > width:
            if self.iterations >= budget:
                if not self.exhausted:
                    logger.warning(
                        "iteration budget of %d exhausted at gap %s (wanted %s)",
                        budget, float(self.gap()), float(width),
                    )
                self.exhausted = True
                return False
            self._kleene(min(KLEENE_CHUNK, budget - self.iterations))
            self._tighten_upper(width)
        logger.debug("bracket gap %s after %d iterations", float(self.gap()), self.iterations)
        return True


def check_configuration(ppda: PPDA, c: Configuration) -> None:
    if c.state not in ppda.states:
        raise ModelError(f"unknown control state {show(c.state)} in configuration {c}")
    alphabet = set(ppda.alphabet)
    for x in c.stack:
        if x not in alphabet:
            raise ModelError(f"unknown stack symbol {show(x)} in configuration {c}")


def refinement_widths(settings: Settings) -> List[Fraction]:
    return [Fraction(1, 2 ** (6 + 4 * r)) for r in range(settings.max_refinements)]


class Oracle:
    """
    Answers threshold questions about least solutions. Systems and their
    brackets are cached, so repeated questions about the same system only
    pay for further refinement.
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings.from_env()
        self.stats = OracleStats()
        self._systems: Dict[tuple, MonotoneSystem] = {}
        self._bounds: Dict[int, SystemBounds] = {}

    def warn(self, message: str) -> None:
        logger.warning(message)
        if message not in self.stats.warnings:
            self.stats.warnings.append(message)

    # --- systems --------------------------------------------------------

    def system(self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet) -> MonotoneSystem:
        key = (ppda, c1.heads, c2.base)
        if key not in self._systems:
            self._systems[key] = build_until_system(ppda, c1, c2)
        return self._systems[key]

    def bounds(self, sys: MonotoneSystem) -> SystemBounds:
        if id(sys) not in self._bounds:
            self._bounds[id(sys)] = SystemBounds(sys, self.settings, self.stats)
        return self._bounds[id(sys)]

    def bracket(self, sys: MonotoneSystem, expr: Polynomial, width: Optional[Fraction] = None) -> Interval:
        b = self.bounds(sys)
        b.refine(width or self.settings.width)
        return b.bracket(expr).clamped()

    # --- decisions ------------------------------------------------------

    def decide(self, q: DecisionQuery, backend: Optional[Backend] = None) -> OracleAnswer:
        backend = Backend(backend or self.settings.backend)
        self.stats.oracle_calls += 1
        witness = None
        if backend in (Backend.INTERVALS, Backend.AUTO):
            verdict, witness = self._decide_intervals(q)
            if verdict is not None:
                logger.debug("%s: %s by intervals %s", q, verdict, witness)
                return OracleAnswer(verdict=Verdict.of(verdict), backend="intervals", witness=witness)
        if backend in (Backend.EXTERNAL, Backend.AUTO) and (backend is Backend.EXTERNAL or self.settings.solver_cmd):
            verdict, detail = self._decide_external(q)
            if verdict is not None:
                logger.debug("%s: %s by external solver", q, verdict)
                return OracleAnswer(verdict=Verdict.of(verdict), backend="external", witness=witness)
            return OracleAnswer(verdict=Verdict.UNKNOWN, backend="external", witness=witness, detail=detail)
        return OracleAnswer(
            verdict=Verdict.UNKNOWN, backend="intervals", witness=witness,
            detail="bracket does not separate from the bound",
        )

    def _decide_intervals(self, q: DecisionQuery) -> Tuple[Optional[bool], Optional[Interval]]:
        b = self.bounds(q.system)
        form = q.monotone_form()
        if form is None:
            lhs, rhs = q.sides()
            expr, rel, bound = lhs - rhs, q.rel, ZERO
        else:
            expr, rel, bound = form[0], Rel(form[1]), form[2]
        value = b.bracket(expr)
        verdict = rel.on_interval(value, bound)
        for width in refinement_widths(self.settings):
            if verdict is not None or b.exhausted or b.gap() == 0:
                break
            self.stats.refinements += 1
            b.refine(width)
            value = b.bracket(expr)
            verdict = rel.on_interval(value, bound)
        return verdict, value.clamped() if form is not None else None

    def _decide_external(self, q: DecisionQuery) -> Tuple[Optional[bool], Optional[str]]:
        self.stats.external_calls += 1
        script = smt.query_script(q)
        try:
            answers = smt.run_solver(script, self.settings)
        except SolverError as e:
            self.warn(f"external solver failed on {q}: {e}")
            return None, str(e)
        if answers is None:
            return None, "solver timeout"
        verdict = script.verdict(answers)
        return verdict, None if verdict is not None else "solver answered unknown"

    def holds(self, q: DecisionQuery, backend: Optional[Backend] = None) -> bool:
        """Like decide, but an undecided predicate is an error naming it."""
        answer = self.decide(q, backend)
        if not answer.decided:
            raise OracleUnknown(str(q))
        return answer.verdict is Verdict.TRUE

    # --- until probabilities ----------------------------------------------

    def _until_dp(self, sys: MonotoneSystem, b: SystemBounds, c: Configuration) -> Interval:
        states = sys.ppda.states
        level = {q: Interval.point(1 if sys.c2.has_eps(q) else 0) for q in states}
        for x in reversed(c.stack):
            nxt = {}
            for q in states:
                head = Head(q, x)
                acc = b.interval(VarId(head, BULLET))
                for t in states:
                    if level[t].hi == 0:
                        continue
                    acc = acc.add(b.interval(VarId(head, t)).mul(level[t]))
                nxt[q] = acc.clamped()
            level = nxt
        return level[c.state]

    def until_probability(
        self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet, c: Configuration, width: Optional[Fraction] = None
    ) -> Interval:
        width = width or self.settings.width
        check_configuration(ppda, c)
        if not c.stack:
            return Interval.point(1 if c in c2 else 0)
        sys = self.system(ppda, c1, c2)
        b = self.bounds(sys)
        w = width
        result = self._until_dp(sys, b, c)
        for _ in range(self.settings.max_refinements + 1):
            if result.width <= width:
                return result
            b.refine(w)
            result = self._until_dp(sys, b, c)
            if b.exhausted:
                break
            w /= 16
            self.stats.refinements += 1
        if result.width > width:
            self.warn(f"P({c}, {c1} U {c2}) only bracketed to width {result.width}")
        return result

    def until_positive(self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet, c: Configuration) -> bool:
        """Exact test P(c, C1 U C2) > 0, read off the Boolean abstraction."""
        check_configuration(ppda, c)
        if not c.stack:
            return c in c2
        sys = self.system(ppda, c1, c2)
        truth = self.bounds(sys).truth
        level = {q: sys.c2.has_eps(q) for q in ppda.states}
        for x in reversed(c.stack):
            level = {
                q: VarId(Head(q, x), BULLET) in truth
                or any(level[t] and VarId(Head(q, x), t) in truth for t in ppda.states)
                for q in ppda.states
            }
        return level[c.state]

    def until_query(self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet, c: Configuration, rel: Rel, bound) -> DecisionQuery:
        check_configuration(ppda, c)
        sys = self.system(ppda, c1, c2)
        label = f"P({c}, {c1} U {c2}) {rel.value} {bound}"
        return DecisionQuery(sys, until_expression(sys, c), rel, Fraction(bound), label=label)

    def compare_until(
        self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet, c: Configuration, rel: Rel, bound,
        backend: Optional[Backend] = None,
    ) -> OracleAnswer:
        return self.decide(self.until_query(ppda, c1, c2, c, Rel(rel), bound), backend)

    def bisect_bounds(
        self, ppda: PPDA, c1: SimpleSet, c2: SimpleSet, head: Head, lam: Fraction,
        backend: Optional[Backend] = None,
    ) -> Interval:
        """
        Bisection on the value of P(pX, C1 U C2): ceil(-log2 λ) rounds of
        "value >= midpoint". An undecided round narrows by refining the
        bracket to half the current width instead.
        """
        lam = Fraction(lam)
        if not 0 < lam < 1:
            raise ModelError(f"precision {lam} outside (0,1)")
        rounds = 0
        while Fraction(1, 2 ** rounds) > lam:
            rounds += 1
        c = Configuration(head.state, (head.symbol,))
        check_configuration(ppda, c)
        sys = self.system(ppda, c1, c2)
        expr = until_expression(sys, c)
        lo, hi = ZERO, ONE
        for i in range(rounds):
            mid = (lo + hi) / 2
            self.stats.rounds += 1
            label = f"P({c}, {c1} U {c2}) >= {mid}"
            answer = self.decide(DecisionQuery(sys, expr, Rel.GE, mid, label=label), backend)
            if answer.verdict is Verdict.TRUE:
                lo = mid
            elif answer.verdict is Verdict.FALSE:
                hi = mid
            else:
                target = (hi - lo) / 2
                value = self.bracket(sys, expr, target)
                lo, hi = max(lo, value.lo), min(hi, value.hi)
                if hi - lo > target:
                    self.warn(f"bisection round {i + 1} for {c} narrowed only to width {hi - lo}")
            logger.debug("bisection round %d: [%s, %s]", i + 1, lo, hi)
        return Interval(lo, hi)

    # --- infinite runs ------------------------------------------------------

    def irun_probability(self, ppda: PPDA, head: Head, width: Optional[Fraction] = None) -> Interval:
        """P(IRun(pX)) = 1 - P(pX, all U Dead)."""
        c = Configuration(head.state, (head.symbol,))
        dead = SimpleSet.dead(ppda)
        return self.until_probability(ppda, SimpleSet.everything(ppda), dead, c, width).complement()

    def irun_positive(self, ppda: PPDA, head: Head, backend: Optional[Backend] = None) -> bool:
        c = Configuration(head.state, (head.symbol,))
        everything, dead = SimpleSet.everything(ppda), SimpleSet.dead(ppda)
        if not self.until_positive(ppda, everything, dead, c):
            return True
        q = self.until_query(ppda, everything, dead, c, Rel.LT, 1)
        q = DecisionQuery(q.system, q.expr, q.rel, q.bound, label=f"P(IRun({head})) > 0")
        return self.holds(q, backend)


# --- function-style entry points ---------------------------------------------

def kleene_lower(
    sys: MonotoneSystem,
    iterations: Optional[int] = None,
    width: Optional[Fraction] = None,
    bits: Optional[int] = DYADIC_BITS,
    settings: Optional[Settings] = None,
) -> KleeneRun:
    """
    F^k(0) on every variable. With `iterations`, plain Kleene iteration
    (rounded down to `bits` binary digits; bits=None keeps exact values);
    with `width`, iterate until the certified gap to an upper bound is
    at most `width`.
    """
    if width is not None:
        b = SystemBounds(sys, settings or Settings.from_env())
        reached = b.refine(width)
        return KleeneRun(b.lower_valuation(), b.iterations, reached)
    k = iterations if iterations is not None else KLEENE_CHUNK
    values: Valuation = {v: ZERO for v in sys.vars}
    for i in range(k):
        image = evaluate(sys, values)
        if bits is not None:
            image = {v: round_down(x, bits) for v, x in image.items()}
        if image == values:
            return KleeneRun(values, i, True)
        values = image
    return KleeneRun(values, k, False)


def certify_upper(sys: MonotoneSystem, cand: Valuation) -> bool:
    image = evaluate(sys, cand)
    return all(image[v] <= cand[v] for v in sys.vars)


def find_upper(sys: MonotoneSystem, width: Fraction, settings: Optional[Settings] = None) -> UpperBound:
    width = Fraction(width)
    if width <= 0:
        raise ModelError("width must be positive")
    b = SystemBounds(sys, settings or Settings.from_env())
    reached = b.refine(width)
    return UpperBound(b.upper_valuation(), reached)


def decide(q: DecisionQuery, backend: Backend = Backend.AUTO, settings: Optional[Settings] = None) -> OracleAnswer:
    return Oracle(settings).decide(q, backend)


def until_probability(
    ppda: PPDA, c1: SimpleSet, c2: SimpleSet, c: Configuration, width: Optional[Fraction] = None,
    settings: Optional[Settings] = None,
) -> Interval:
    return Oracle(settings).until_probability(ppda, c1, c2, c, width)


def compare_until(ppda, c1, c2, c, rel, bound, backend=Backend.AUTO, settings=None) -> OracleAnswer:
    return Oracle(settings).compare_until(ppda, c1, c2, c, Rel(rel), bound, backend)


def bisect_bounds(ppda, c1, c2, head, lam, backend=Backend.AUTO, settings=None) -> Interval:
    return Oracle(settings).bisect_bounds(ppda, c1, c2, head, lam, backend)


def irun_probability(ppda: PPDA, head: Head, width: Optional[Fraction] = None, settings=None) -> Interval:
    return Oracle(settings).irun_probability(ppda, head, width)
