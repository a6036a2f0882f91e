"""
ω-regular properties through minima.

A minimum of a run is a configuration whose stack is never shorter later
on. Between consecutive minima an observing automaton reads the heads of
the run (restarting from its initial state at every minimum); the pairs
(head of the minimum, observation of the jump into it) form a finite
Markov chain whose bottom components decide acceptance.
"""

import logging
from collections import deque
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations
from typing import Dict, FrozenSet, List, NamedTuple, Optional, Tuple, Union

from .constants import FRESH_PREFIX
from .equations import Polynomial, VarId, boolean_abstraction, build_until_system, pop_targets
from .errors import ModelError, OracleUnknown
from .intervals import Interval
from .model import PPDA, Configuration, Head, Rule, State, Symbol, normalize, show
from .regsets import SimpleSet
from .solver import ONE, ZERO, Oracle
from .syntax import TokenStream

logger = logging.getLogger(__name__)

BOTTOM = "⊥"
BOOT_SYMBOL = f"{FRESH_PREFIX}boot"


# --- head automata -------------------------------------------------------------

@dataclass(frozen=True)
class HeadAutomaton:
    """Deterministic automaton over the heads of a system, with Muller-style acceptance."""

    states: Tuple[Hashable, ...]
    init: Hashable
    trans: Mapping[Tuple[Hashable, Head], Hashable] = field(repr=False)
    acceptance: FrozenSet[FrozenSet[Hashable]]

    def step(self, a: Hashable, head: Head) -> Hashable:
        try:
            return self.trans[a, head]
        except KeyError:
            raise ModelError(f"automaton has no move from {show(a)} on {head}") from None

    def accepting(self, recurrent: FrozenSet[Hashable]) -> bool:
        return frozenset(recurrent) in self.acceptance

    def check_total(self, ppda: PPDA) -> None:
        for a in self.states:
            for head in ppda.heads:
                if (a, head) not in self.trans:
                    raise ModelError(f"automaton has no move from {show(a)} on {head}")

    def letters(self) -> FrozenSet[Hashable]:
        """The elements acceptance sets are drawn from."""
        return frozenset(self.states)

    def complemented(self) -> "HeadAutomaton":
        """The same automaton accepting exactly the nonempty recurrent sets this one rejects."""
        letters = list(self.letters())
        subsets = (frozenset(c) for k in range(1, len(letters) + 1) for c in combinations(letters, k))
        return replace(self, acceptance=frozenset(s for s in subsets if s not in self.acceptance))


class ObservingAutomaton(HeadAutomaton):
    """Reads the heads of each jump between minima, restarting at every minimum."""


class MullerAutomaton(HeadAutomaton):
    """Reads the whole head sequence of a run; accepts by the set of states seen infinitely often."""


class UnionObserver(ObservingAutomaton):
    """Observer whose states are sets; a recurrent family is accepting when its union is."""

    def accepting(self, recurrent: FrozenSet[Hashable]) -> bool:
        union = frozenset().union(*recurrent)
        return union in self.acceptance

    def letters(self) -> FrozenSet[Hashable]:
        return frozenset().union(*self.states)


def observe(obs: HeadAutomaton, heads: Iterable[Head]) -> Hashable:
    a = obs.init
    for head in heads:
        a = obs.step(a, head)
    return a


def parse_head_automata(text: str, ppda: PPDA) -> Dict[str, HeadAutomaton]:
    """
    Observer and Muller automata over the heads of `ppda`:

        observer zseen
          states a0 a1;
          init a0;
          trans a0 Z -> a1;        (Z: every control state; p.Z: one head)
          trans a0 * -> a0;        (* covers the heads not listed)
          trans a1 * -> a1;
          acceptance {a1} {a0 a1};
    """
    ts = TokenStream(text)
    result: Dict[str, HeadAutomaton] = {}
    while not ts.at_end():
        kind = ts.next()
        if kind.text not in ("observer", "muller"):
            ts.error(f"expected 'observer' or 'muller', found {kind.text!r}", kind)
        name = ts.ident("automaton name").text
        if name in result:
            ts.error(f"automaton {name} defined twice")
        cls = ObservingAutomaton if kind.text == "observer" else MullerAutomaton
        result[name] = _parse_head_block(ts, ppda, name, cls)
    return result


def _parse_head_block(ts: TokenStream, ppda: PPDA, name: str, cls) -> HeadAutomaton:
    states_by_symbol = {show(x): x for x in ppda.alphabet}
    controls = {show(p): p for p in ppda.states}
    names: List[str] = []
    init: Optional[str] = None
    explicit: Dict[Tuple[str, Head], str] = {}
    wildcard: Dict[str, str] = {}
    acceptance: List[FrozenSet[str]] = []
    start = ts.peek()
    while not ts.at_end() and not ts.at("observer") and not ts.at("muller"):
        if ts.accept("states"):
            names.extend(tok.text for tok in ts.until(";"))
        elif ts.accept("init"):
            init = ts.ident("state").text
            ts.expect(";")
        elif ts.accept("trans"):
            src = ts.ident("state")
            heads = _head_pattern(ts, controls, states_by_symbol)
            ts.expect("->")
            dst = ts.ident("state")
            ts.expect(";")
            for tok in (src, dst):
                if tok.text not in names:
                    ts.error(f"unknown automaton state {tok.text!r}", tok)
            if heads is None:
                wildcard[src.text] = dst.text
            else:
                for head in heads:
                    explicit[src.text, head] = dst.text
        elif ts.accept("acceptance"):
            while not ts.accept(";"):
                ts.expect("{")
                members = []
                while not ts.accept("}"):
                    tok = ts.ident("state")
                    if tok.text not in names:
                        ts.error(f"unknown automaton state {tok.text!r}", tok)
                    members.append(tok.text)
                acceptance.append(frozenset(members))
        else:
            ts.error(f"unexpected {ts.peek().text!r} in automaton {name}")
    if init is None or init not in names:
        ts.error(f"automaton {name} needs an 'init' state among its states", start)
    trans = {}
    for a in names:
        for head in ppda.heads:
            target = explicit.get((a, head), wildcard.get(a))
            if target is None:
                ts.error(f"automaton {name} has no move from {a} on {head}", start)
            trans[a, head] = target
    return cls(tuple(names), init, trans, frozenset(acceptance))


def _head_pattern(ts: TokenStream, controls, symbols) -> Optional[List[Head]]:
    if ts.accept("*"):
        return None
    first = ts.ident("head")
    if ts.accept("."):
        second = ts.ident("stack symbol")
        if first.text not in controls:
            ts.error(f"unknown control state {first.text!r}", first)
        if second.text not in symbols:
            ts.error(f"unknown stack symbol {second.text!r}", second)
        return [Head(controls[first.text], symbols[second.text])]
    if first.text not in symbols:
        ts.error(f"unknown stack symbol {first.text!r}", first)
    return [Head(p, symbols[first.text]) for p in controls.values()]


# --- minima ------------------------------------------------------------------

class DropCertifier:
    """
    Decides from the Boolean abstraction whether the stack of a
    configuration can ever become shorter than a given length.
    """

    def __init__(self, ppda: PPDA):
        ppda.require_normalized()
        self.ppda = ppda
        sys = build_until_system(ppda, SimpleSet.everything(ppda), SimpleSet())
        self.truth = boolean_abstraction(sys).least_fixed_point()

    def reachable_after_pops(self, c: Configuration) -> List[FrozenSet[State]]:
        """Entry k: control states in which the top k symbols can all be popped."""
        level = frozenset([c.state])
        result = [level]
        for x in c.stack:
            level = frozenset(t for q in level for t in pop_targets(self.truth, Head(q, x), self.ppda.states))
            result.append(level)
        return result

    def can_drop_below(self, c: Configuration, length: int) -> bool:
        if length <= 0:
            return False
        pops = len(c.stack) - length + 1
        if pops <= 0:
            return True
        return bool(self.reachable_after_pops(c)[pops])


def minima(
    path: Sequence[Configuration],
    horizon_complete: bool = True,
    certifier: Optional[DropCertifier] = None,
) -> List[int]:
    """
    Positions whose stack length is at most every later one in the prefix.
    For a prefix of a longer run (horizon_complete false) a position is kept
    only when, from the last configuration, the stack provably never drops
    below its length.
    """
    return minima_of_lengths(
        [len(c.stack) for c in path], path[-1] if path else None, horizon_complete, certifier
    )


def minima_of_lengths(
    lengths: Sequence[int],
    last: Optional[Configuration],
    horizon_complete: bool = True,
    certifier: Optional[DropCertifier] = None,
) -> List[int]:
    """Same as `minima`, given only the stack lengths and the final configuration."""
    if not horizon_complete and certifier is None:
        raise ModelError("minima of an unfinished run need a drop certifier")
    result = []
    shortest = None
    for i in range(len(lengths) - 1, -1, -1):
        n = lengths[i]
        if shortest is None or n <= shortest:
            result.append(i)
            shortest = n
    result.reverse()
    if horizon_complete or not lengths:
        return result
    levels = certifier.reachable_after_pops(last)
    top = lengths[-1]
    return [i for i in result if lengths[i] == 0 or not levels[top - lengths[i] + 1]]


# --- products ------------------------------------------------------------------

def product_observer(ppda: PPDA, obs: HeadAutomaton) -> PPDA:
    """(p,ā)X -x-> (t,â)α  iff  pX -x-> tα and step(ā, pX) = â."""
    ppda.require_normalized()
    states = tuple((p, a) for p in ppda.states for a in obs.states)
    rules = tuple(
        Rule(Head((r.lhs.state, a), r.lhs.symbol), (r.rhs_state, obs.step(a, r.lhs)), r.rhs_stack, r.prob)
        for r in ppda.rules
        for a in obs.states
    )
    return PPDA(states, ppda.alphabet, rules)


def union_observer(ppda: PPDA, muller: MullerAutomaton) -> Tuple[PPDA, UnionObserver]:
    """
    The synchronized product of a system and a Muller automaton, and the
    observer over it collecting the Muller states passed on each jump.
    """
    product = product_observer(ppda, muller)
    start = frozenset()
    seen = {start}
    queue = deque([start])
    trans = {}
    while queue:
        m = queue.popleft()
        for head in product.heads:
            nxt = m | {head.state[1]}
            trans[m, head] = nxt
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    observer = UnionObserver(tuple(seen), start, trans, frozenset(muller.acceptance))
    return product, observer


def bootstrap(ppda: PPDA, obs: HeadAutomaton, c: Configuration) -> Tuple[PPDA, HeadAutomaton, Head]:
    """
    Entry head for a configuration with a longer stack: a fresh symbol B
    with the single rule pB -1-> pα. The observer ignores the new heads.
    """
    if not c.stack:
        raise ModelError("the empty configuration has no runs to observe")
    if len(c.stack) == 1:
        return ppda, obs, c.head
    if BOOT_SYMBOL in ppda.alphabet:
        raise ModelError(f"{BOOT_SYMBOL} is reserved")
    wrapped = PPDA(
        ppda.states,
        ppda.alphabet + (BOOT_SYMBOL,),
        ppda.rules + (Rule(Head(c.state, BOOT_SYMBOL), c.state, c.stack, ONE),),
    )
    wrapped = normalize(wrapped)
    trans = dict(obs.trans)
    for a in obs.states:
        for head in wrapped.heads:
            trans.setdefault((a, head), a)
    return wrapped, type(obs)(obs.states, obs.init, trans, obs.acceptance), Head(c.state, BOOT_SYMBOL)


# --- the minima chain ------------------------------------------------------------

class Entry(NamedTuple):
    head: Head

    def __str__(self) -> str:
        return str(self.head)


class Pair(NamedTuple):
    head: Head
    obs: Hashable

    def __str__(self) -> str:
        return f"({self.head},{show(self.obs)})"


ChainState = Union[str, Entry, Pair]


class ChainEdge(NamedTuple):
    prob: Interval
    positive: bool


@dataclass(frozen=True)
class MinChain:
    observer: HeadAutomaton
    states: Tuple[ChainState, ...]
    edges: Mapping[ChainState, Mapping[ChainState, ChainEdge]]
    width: Fraction

    def graph(self) -> Dict[ChainState, List[ChainState]]:
        """The exact digraph: edges whose positivity is certified."""
        return {s: [t for t, e in self.edges.get(s, {}).items() if e.positive] for s in self.states}

    def has_edge(self, s: ChainState, t: ChainState) -> bool:
        edge = self.edges.get(s, {}).get(t)
        return edge is not None and edge.positive

    def sum_brackets_one(self, s: ChainState) -> bool:
        out = self.edges.get(s, {}).values()
        return sum((e.prob.lo for e in out), ZERO) <= 1 <= sum((e.prob.hi for e in out), ZERO)

    def dump(self) -> str:
        lines = []
        for s in self.states:
            lines.append(f"state {s}")
            for t, e in self.edges.get(s, {}).items():
                lines.append(f"  -> {t} {e.prob}{'' if e.positive else ' (zero)'}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        return {
            "states": [str(s) for s in self.states],
            "edges": [
                {"from": str(s), "to": str(t), "prob": e.prob, "positive": e.positive}
                for s in self.states
                for t, e in self.edges.get(s, {}).items()
            ],
        }


class ChainBuilder:
    """Caches the termination brackets and pop-path systems a chain needs."""

    def __init__(self, ppda: PPDA, obs: HeadAutomaton, width=None, oracle: Optional[Oracle] = None):
        ppda.require_normalized()
        obs.check_total(ppda)
        self.ppda = ppda
        self.obs = obs
        self.oracle = oracle or Oracle()
        self.width = Fraction(width or self.oracle.settings.width)
        self.product = product_observer(ppda, obs)
        self.pop_system = self.oracle.system(self.product, SimpleSet.everything(self.product), SimpleSet())
        self._positive: Dict[Head, bool] = {}
        self._irun: Dict[Head, Interval] = {}
        self._edges: Dict[Head, Dict[Pair, ChainEdge]] = {}

    def irun_positive(self, head: Head) -> bool:
        if head not in self._positive:
            self._positive[head] = self.oracle.irun_positive(self.ppda, head)
        return self._positive[head]

    def irun(self, head: Head) -> Interval:
        """P(IRun(head)); bracketed away from 0 whenever it is positive."""
        if head not in self._irun:
            if not self.irun_positive(head):
                self._irun[head] = Interval.point(0)
            else:
                w = self.width / 4
                value = self.oracle.irun_probability(self.ppda, head, w)
                for _ in range(self.oracle.settings.max_refinements):
                    if value.lo > 0:
                        break
                    w /= 16
                    value = self.oracle.irun_probability(self.ppda, head, w)
                if value.lo <= 0:
                    raise OracleUnknown(f"P(IRun({head})) > 0 but its bracket touches 0", hint="lower --width")
                self._irun[head] = value
        return self._irun[head]

    def pop_path_expr(self, head: Head, r: State, z: Symbol, a: Hashable) -> Optional[Polynomial]:
        """
        The probability that the product, started in (head.state, a0) with
        stack head.symbol, pops it into control state r with an observation
        that becomes `a` on reading rZ; None when it is zero.
        """
        truth = self.oracle.bounds(self.pop_system).truth
        start = Head((head.state, self.obs.init), head.symbol)
        terms = [
            VarId(start, (r, before))
            for before in self.obs.states
            if self.obs.step(before, Head(r, z)) == a and VarId(start, (r, before)) in truth
        ]
        if not terms:
            return None
        return sum((self.pop_system.variable(v) for v in terms[1:]), self.pop_system.variable(terms[0]))

    def pop_path(self, head: Head, r: State, z: Symbol, a: Hashable) -> Interval:
        expr = self.pop_path_expr(head, r, z, a)
        if expr is None:
            return Interval.point(0)
        return self.oracle.bracket(self.pop_system, expr, self.width / 4)

    def weights(self, head: Head) -> Dict[Pair, List[Tuple[Fraction, Optional[Polynomial]]]]:
        """
        The sum S of every edge leaving (head, a), as rule probabilities,
        each times a pop-path expression when the pushed symbol is popped
        on the way to the next minimum.
        """
        a0 = self.obs.init
        weight: Dict[Pair, List[Tuple[Fraction, Optional[Polynomial]]]] = {}
        for rule in self.ppda.outgoing(head):
            if rule.kind == "pop":
                continue
            top = Head(rule.rhs_state, rule.rhs_stack[0])
            weight.setdefault(Pair(top, self.obs.step(a0, top)), []).append((rule.prob, None))
            if rule.kind == "push":
                z = rule.rhs_stack[1]
                for q in self.ppda.states:
                    for a in self.obs.states:
                        expr = self.pop_path_expr(top, q, z, a)
                        if expr is not None:
                            weight.setdefault(Pair(Head(q, z), a), []).append((rule.prob, expr))
        return {pair: parts for pair, parts in weight.items() if self.irun_positive(pair.head)}

    def head_edges(self, head: Head) -> Dict[Pair, ChainEdge]:
        """Outgoing edges of every pair state (head, a); they do not depend on a."""
        if head in self._edges:
            return self._edges[head]
        denominator = self.irun(head)
        edges: Dict[Pair, ChainEdge] = {}
        for pair, parts in self.weights(head).items():
            s = Interval.point(0)
            for prob, expr in parts:
                if expr is None:
                    s = s.add(Interval.point(prob))
                else:
                    s = s.add(self.oracle.bracket(self.pop_system, expr, self.width / 4).scale(prob))
            ratio = self.irun(pair.head).divide(denominator)
            edges[pair] = ChainEdge(ratio.mul(s).clamped().rounded(), True)
        self._edges[head] = edges
        logger.debug("chain edges from %s: %d", head, len(edges))
        return edges

    def entry_edges(self, head: Head) -> Dict[ChainState, ChainEdge]:
        c = Configuration(head.state, (head.symbol,))
        everything, dead = SimpleSet.everything(self.ppda), SimpleSet.dead(self.ppda)
        edges: Dict[ChainState, ChainEdge] = {}
        value = self.irun(head)
        if self.irun_positive(head):
            edges[Pair(head, self.obs.init)] = ChainEdge(value, True)
        if self.oracle.until_positive(self.ppda, everything, dead, c):
            edges[BOTTOM] = ChainEdge(value.complement(), True)
        return edges

    def build(self, entries: Optional[Iterable[Head]] = None) -> MinChain:
        entries = tuple(entries) if entries is not None else self.ppda.heads
        states: List[ChainState] = [BOTTOM]
        edges: Dict[ChainState, Dict[ChainState, ChainEdge]] = {BOTTOM: {BOTTOM: ChainEdge(Interval.point(1), True)}}
        queue: deque = deque()
        for head in entries:
            entry = Entry(head)
            states.append(entry)
            edges[entry] = self.entry_edges(head)
            queue.extend(t for t in edges[entry] if isinstance(t, Pair))
        while queue:
            pair = queue.popleft()
            if pair in edges:
                continue
            states.append(pair)
            edges[pair] = dict(self.head_edges(pair.head))
            queue.extend(t for t in edges[pair] if t not in edges)
        logger.debug("minima chain: %d states", len(states))
        return MinChain(self.obs, tuple(states), edges, self.width)


def pop_path_prob(
    ppda: PPDA, obs: HeadAutomaton, head: Head, r: State, z: Symbol, a: Hashable,
    width=None, oracle: Optional[Oracle] = None,
) -> Interval:
    return ChainBuilder(ppda, obs, width, oracle).pop_path(head, r, z, a)


def build_min_chain(
    ppda: PPDA, obs: HeadAutomaton, width=None, oracle: Optional[Oracle] = None,
    entries: Optional[Iterable[Head]] = None,
) -> MinChain:
    return ChainBuilder(ppda, obs, width, oracle).build(entries)


# --- footprints ------------------------------------------------------------------

def footprint(
    path: Sequence[Configuration],
    obs: HeadAutomaton,
    terminated: bool,
    certifier: Optional[DropCertifier] = None,
) -> List[ChainState]:
    """
    Chain states visited by a run: its entry head, then one pair per
    minimum; a terminated run continues in ⊥. For an unfinished run only
    certified minima are used.
    """
    if not path:
        raise ModelError("footprint of an empty run")
    heads = [c.head if c.stack else None for c in path]
    return footprint_of(heads, [len(c.stack) for c in path], path[-1], obs, terminated, certifier)


def footprint_of(
    heads: Sequence[Optional[Head]],
    lengths: Sequence[int],
    last: Configuration,
    obs: HeadAutomaton,
    terminated: bool,
    certifier: Optional[DropCertifier] = None,
) -> List[ChainState]:
    """Same as `footprint`, given the heads, the stack lengths and the final configuration."""
    if not lengths or lengths[0] != 1:
        raise ModelError("footprints start from a configuration with one stack symbol")
    trail: List[ChainState] = [Entry(heads[0])]
    if terminated:
        return trail + [BOTTOM]
    positions = minima_of_lengths(lengths, last, horizon_complete=certifier is None, certifier=certifier)
    if not positions or positions[0] != 0:
        return trail
    trail.append(Pair(heads[0], obs.init))
    for prev, cur in zip(positions, positions[1:]):
        a = observe(obs, heads[prev + 1 : cur + 1])
        trail.append(Pair(heads[cur], a))
    return trail
