"""
Analysis of the minima chain: bottom components, certified hitting
probabilities, and the acceptance probability of observer and Muller
properties.
"""

import logging
from fractions import Fraction
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict

from .equations import until_expression
from .errors import SolverError
from .graphs import backward_reachable, bottom_components
from .intervals import Interval, round_down, round_up
from .model import PPDA, Configuration, Head
from .omega import (
    BOTTOM,
    ChainBuilder,
    ChainState,
    Entry,
    HeadAutomaton,
    MinChain,
    MullerAutomaton,
    Pair,
    bootstrap,
    union_observer,
)
from .regsets import SimpleSet
from .smt import SmtScript, declare_system, least_solution_constraint, number, run_solver, term
from .solver import ONE, ZERO, Backend, Oracle, OracleAnswer, Rel, Verdict

logger = logging.getLogger(__name__)


class BsccClassification(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    components: List[FrozenSet[Any]]
    accepting: List[FrozenSet[Any]]

    @property
    def targets(self) -> FrozenSet[Any]:
        return frozenset().union(*self.accepting)

    def to_json(self):
        return {
            "components": [sorted(map(str, c)) for c in self.components],
            "accepting": [sorted(map(str, c)) for c in self.accepting],
        }


class AcceptanceReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    head: str
    probability: Interval
    bsccs: BsccClassification
    chain_states: int
    width_reached: bool


def bsccs(chain: MinChain, obs: Optional[HeadAutomaton] = None) -> BsccClassification:
    """Bottom components of the exact digraph; {⊥} is never accepting."""
    obs = obs or chain.observer
    components = bottom_components(chain.graph())
    accepting = [
        c for c in components
        if BOTTOM not in c and obs.accepting(frozenset(s.obs for s in c if isinstance(s, Pair)))
    ]
    return BsccClassification(components=components, accepting=accepting)


def hitting_probability(
    chain: MinChain,
    targets: Iterable[ChainState],
    source: ChainState,
    width=None,
    max_iterations: int = 100000,
) -> Interval:
    """
    Interval value iteration on the states that can reach the targets:
    from 0 with the lower edge brackets and from 1 with the upper ones.
    Every iterate is a certified bound whether or not it has converged.
    """
    targets = frozenset(targets)
    width = Fraction(width) if width is not None else chain.width
    if source in targets:
        return Interval.point(1)
    graph = chain.graph()
    can = backward_reachable(graph, targets)
    if source not in can:
        return Interval.point(0)
    unknown = [s for s in chain.states if s in can and s not in targets]
    lo: Dict[ChainState, Fraction] = {s: ZERO for s in unknown}
    hi: Dict[ChainState, Fraction] = {s: ONE for s in unknown}

    def value(t: ChainState, table: Dict[ChainState, Fraction]) -> Fraction:
        if t in targets:
            return ONE
        return table.get(t, ZERO)

    for i in range(max_iterations):
        for s in unknown:
            out = chain.edges[s]
            lo[s] = round_down(sum((e.prob.lo * value(t, lo) for t, e in out.items() if e.positive), ZERO))
            hi[s] = min(ONE, round_up(sum((e.prob.hi * value(t, hi) for t, e in out.items() if e.positive), ZERO)))
        if hi[source] - lo[source] <= width:
            break
    else:
        logger.warning("hitting probability from %s only reached width %s", source, hi[source] - lo[source])
    logger.debug("hitting probability from %s after %d sweeps: [%s, %s]", source, i + 1, lo[source], hi[source])
    return Interval(lo[source], hi[source])


def _entry(ppda: PPDA, obs: HeadAutomaton, start: Union[Head, Configuration]):
    if isinstance(start, Configuration):
        return bootstrap(ppda, obs, start)
    return ppda, obs, start


def analyse_acceptance(
    ppda: PPDA,
    obs: HeadAutomaton,
    start: Union[Head, Configuration],
    width=None,
    oracle: Optional[Oracle] = None,
) -> AcceptanceReport:
    """
    Builds the chain reachable from the entry, classifies its bottom
    components and brackets the probability of hitting an accepting one,
    rebuilding with narrower edge brackets until the width is reached.
    """
    oracle = oracle or Oracle()
    width = Fraction(width or oracle.settings.width)
    ppda, obs, head = _entry(ppda, obs, start)
    builder_width = width
    for _ in range(oracle.settings.max_refinements + 1):
        chain = ChainBuilder(ppda, obs, builder_width, oracle).build([head])
        classification = bsccs(chain, obs)
        value = hitting_probability(chain, classification.targets, Entry(head), width)
        if value.width <= width:
            break
        builder_width /= 16
    else:
        oracle.warn(f"acceptance probability from {head} only bracketed to width {value.width}")
    return AcceptanceReport(
        head=str(head),
        probability=value,
        bsccs=classification,
        chain_states=len(chain.states),
        width_reached=value.width <= width,
    )


def acceptance_probability(
    ppda: PPDA, obs: HeadAutomaton, start: Union[Head, Configuration], width=None, oracle: Optional[Oracle] = None
) -> Interval:
    return analyse_acceptance(ppda, obs, start, width, oracle).probability


def acceptance_target(
    ppda: PPDA, aut: HeadAutomaton, start: Union[Head, Configuration]
) -> Tuple[PPDA, HeadAutomaton, Head]:
    """
    The system, observer and entry head whose chain decides acceptance from
    `start`. A Muller automaton is replaced by the union observer over the
    product: P(Run(pX, B)) = P(Run((p,b_I)X, Acc)).
    """
    if not isinstance(aut, MullerAutomaton):
        return _entry(ppda, aut, start)
    aut.check_total(ppda)
    if isinstance(start, Configuration):
        ppda, aut, start = bootstrap(ppda, aut, start)
    product, observer = union_observer(ppda, aut)
    return product, observer, Head((start.state, aut.init), start.symbol)


def muller_report(
    ppda: PPDA, muller: MullerAutomaton, start: Union[Head, Configuration], width=None, oracle: Optional[Oracle] = None
) -> AcceptanceReport:
    product, observer, head = acceptance_target(ppda, muller, start)
    return analyse_acceptance(product, observer, head, width, oracle)


def muller_probability(
    ppda: PPDA, muller: MullerAutomaton, start: Union[Head, Configuration], width=None, oracle: Optional[Oracle] = None
) -> Interval:
    return muller_report(ppda, muller, start, width, oracle).probability


def export_acceptance_smt(
    ppda: PPDA, obs: HeadAutomaton, head: Head, rel: Rel, bound, oracle: Optional[Oracle] = None
) -> SmtScript:
    """
    One script deciding `P(Run(head, Acc)) ~ bound` exactly: the least
    solutions of the termination and pop-path systems, the edge values of
    the positive part of the chain, and its hitting equations.
    """
    oracle = oracle or Oracle()
    builder = ChainBuilder(ppda, obs, oracle=oracle)
    chain = builder.build([head])
    targets = bsccs(chain, obs).targets
    can = backward_reachable(chain.graph(), targets)
    term_sys = oracle.system(ppda, SimpleSet.everything(ppda), SimpleSet.dead(ppda))
    pop_sys = builder.pop_system

    def irun(h: Head) -> str:
        return f"(- 1.0 {term(until_expression(term_sys, Configuration(h.state, (h.symbol,))), 't!')})"

    unknown = [s for s in chain.states if s in can and s not in targets]
    names = {s: f"|hit!{i}|" for i, s in enumerate(unknown)}

    def value(t: ChainState) -> str:
        return "1.0" if t in targets else names.get(t, "0.0")

    lines = [f"; P(Run({head}, Acc)) {rel.value} {bound}", "(set-logic NRA)"]
    for sys, prefix in ((term_sys, "t!"), (pop_sys, "o!")):
        lines += declare_system(sys, prefix, post_fixed=False)
        lines.append(f"(assert {least_solution_constraint(sys, prefix)})")
    for s in unknown:
        lines.append(f"(declare-const {names[s]} Real)")
    for s in unknown:
        if isinstance(s, Entry):
            rhs = f"(* {irun(s.head)} {value(Pair(s.head, obs.init))})"
            lines.append(f"(assert (= {names[s]} {rhs}))")
            continue
        parts = []
        for pair, contributions in builder.weights(s.head).items():
            if pair not in can:
                continue
            weight = " ".join(
                number(prob) if expr is None else f"(* {number(prob)} {term(expr, 'o!')})"
                for prob, expr in contributions
            )
            parts.append(f"(* {irun(pair.head)} (+ 0.0 {weight}) {value(pair)})")
        total = "(+ 0.0 " + " ".join(parts) + ")" if parts else "0.0"
        lines.append(f"(assert (= (* {irun(s.head)} {names[s]}) {total}))")
    lines += ["(push 1)", f"(assert ({rel.value} {value(Entry(head))} {number(Fraction(bound))}))", "(check-sat)", "(pop 1)", "(exit)"]
    return SmtScript("\n".join(lines) + "\n", (True,))


def compare_acceptance(
    ppda: PPDA,
    aut: HeadAutomaton,
    start: Union[Head, Configuration],
    rel: Rel,
    bound,
    width=None,
    oracle: Optional[Oracle] = None,
    report: Optional[AcceptanceReport] = None,
) -> OracleAnswer:
    """
    Decides `P(Run(start, Acc)) ~ bound`: first from the certified bracket,
    then with the combined script when the backend allows an external
    solver. `report` reuses a bracket already computed for the same target.
    """
    oracle = oracle or Oracle()
    bound = Fraction(bound)
    backend = Backend(oracle.settings.backend)
    oracle.stats.oracle_calls += 1
    ppda, obs, head = acceptance_target(ppda, aut, start)
    witness = None
    if backend in (Backend.INTERVALS, Backend.AUTO):
        report = report or analyse_acceptance(ppda, obs, head, width, oracle)
        witness = report.probability
        verdict = rel.on_interval(witness, bound)
        if verdict is not None:
            return OracleAnswer(verdict=Verdict.of(verdict), backend="intervals", witness=witness)
    if backend is Backend.INTERVALS or not (backend is Backend.EXTERNAL or oracle.settings.solver_cmd):
        return OracleAnswer(
            verdict=Verdict.UNKNOWN, backend="intervals", witness=witness,
            detail="bracket does not separate from the bound",
        )
    oracle.stats.external_calls += 1
    script = export_acceptance_smt(ppda, obs, head, rel, bound, oracle)
    try:
        answers = run_solver(script, oracle.settings)
    except SolverError as e:
        oracle.warn(f"external solver failed on P(Run({head}, Acc)) {rel.value} {bound}: {e}")
        return OracleAnswer(verdict=Verdict.UNKNOWN, backend="external", witness=witness, detail=str(e))
    if answers is None:
        return OracleAnswer(verdict=Verdict.UNKNOWN, backend="external", witness=witness, detail="solver timeout")
    verdict = script.verdict(answers)
    logger.debug("P(Run(%s, Acc)) %s %s: %s by external solver", head, rel.value, bound, verdict)
    return OracleAnswer(
        verdict=Verdict.of(verdict), backend="external", witness=witness,
        detail=None if verdict is not None else "solver answered unknown",
    )
