"""
Simple and regular sets of configurations.

A Δ-automaton is a deterministic, total finite automaton that starts in a
state chosen by the control state and reads the stack bottom-up; the
configuration is in the set iff the run ends in an accepting state.
Every construction here keeps automata deterministic and total and trims
them to reachable states.
"""

import logging
from collections import deque
from collections.abc import Callable, Hashable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import ModelError, ParseError
from .model import PPDA, Configuration, Head, Rule, State, Symbol, show
from .syntax import TokenStream

logger = logging.getLogger(__name__)

# ε-marker inside SimpleSet pairs
EPS = None


@dataclass(frozen=True)
class SimpleSet:
    """Set of configurations decided by the head (or by pε membership)."""

    base: FrozenSet[Tuple[State, Optional[Symbol]]] = frozenset()

    def __contains__(self, c: Configuration) -> bool:
        return (c.state, c.stack[0] if c.stack else EPS) in self.base

    def has_head(self, head: Head) -> bool:
        return tuple(head) in self.base

    def has_eps(self, state: State) -> bool:
        return (state, EPS) in self.base

    @property
    def heads(self) -> FrozenSet[Head]:
        return frozenset(Head(p, x) for p, x in self.base if x is not EPS)

    @classmethod
    def of(cls, pairs: Iterable[Tuple[State, Optional[Symbol]]]) -> "SimpleSet":
        return cls(frozenset((p, x) for p, x in pairs))

    @classmethod
    def everything(cls, ppda: PPDA) -> "SimpleSet":
        return cls.of([(p, EPS) for p in ppda.states] + [tuple(h) for h in ppda.heads])

    @classmethod
    def empty_stack(cls, ppda: PPDA) -> "SimpleSet":
        return cls.of((p, EPS) for p in ppda.states)

    @classmethod
    def dead(cls, ppda: PPDA) -> "SimpleSet":
        return cls.of([(p, EPS) for p in ppda.states] + [tuple(h) for h in ppda.stuck_heads])

    def __or__(self, other: "SimpleSet") -> "SimpleSet":
        return SimpleSet(self.base | other.base)

    def __str__(self) -> str:
        items = sorted(f"{show(p)}.{'eps' if x is EPS else show(x)}" for p, x in self.base)
        return "{" + ", ".join(items) + "}"


def derived_bullet(s: SimpleSet) -> SimpleSet:
    return SimpleSet(frozenset(pair for pair in s.base if pair[1] is not EPS))


@dataclass(frozen=True)
class DeltaAutomaton:
    control_states: Tuple[State, ...]
    alphabet: Tuple[Symbol, ...]
    states: Tuple[Hashable, ...]
    init: Mapping[State, Hashable]
    trans: Mapping[Tuple[Hashable, Symbol], Hashable] = field(repr=False)
    accepting: FrozenSet[Hashable]

    def run(self, state: Hashable, bottom_up: Iterable[Symbol]) -> Hashable:
        for x in bottom_up:
            state = self.trans[state, x]
        return state

    def final_state(self, c: Configuration) -> Hashable:
        return self.run(self.init[c.state], reversed(c.stack))

    def __contains__(self, c: Configuration) -> bool:
        return self.final_state(c) in self.accepting

    def same_shape(self, other: "DeltaAutomaton") -> bool:
        return set(self.control_states) == set(other.control_states) and set(self.alphabet) == set(other.alphabet)


def accepts(aut: DeltaAutomaton, c: Configuration) -> bool:
    if c.state not in aut.init:
        raise ModelError(f"control state {show(c.state)} unknown to the automaton")
    return c in aut


def explore(
    control_states: Sequence[State],
    alphabet: Sequence[Symbol],
    init: Mapping[State, Hashable],
    step: Callable[[Hashable, Symbol], Hashable],
    accepting: Callable[[Hashable], bool],
) -> DeltaAutomaton:
    """Builds the reachable part of an implicitly given automaton, renumbering states to ints."""
    number: Dict[Hashable, int] = {}
    queue: deque = deque()

    def visit(label: Hashable) -> int:
        if label not in number:
            number[label] = len(number)
            queue.append(label)
        return number[label]

    init_ids = {p: visit(init[p]) for p in control_states}
    trans: Dict[Tuple[int, Symbol], int] = {}
    labels: List[Hashable] = []
    while queue:
        label = queue.popleft()
        labels.append(label)
        src = number[label]
        for x in alphabet:
            trans[src, x] = visit(step(label, x))
    acc = frozenset(number[label] for label in labels if accepting(label))
    return DeltaAutomaton(
        tuple(control_states), tuple(alphabet), tuple(range(len(number))), init_ids, trans, acc
    )


def universal(ppda: PPDA) -> DeltaAutomaton:
    return explore(ppda.states, ppda.alphabet, {p: 0 for p in ppda.states}, lambda s, x: 0, lambda s: True)


def empty(ppda: PPDA) -> DeltaAutomaton:
    return explore(ppda.states, ppda.alphabet, {p: 0 for p in ppda.states}, lambda s, x: 0, lambda s: False)


def is_empty(aut: DeltaAutomaton) -> bool:
    seen = set(aut.init.values())
    queue = deque(seen)
    while queue:
        s = queue.popleft()
        if s in aut.accepting:
            return False
        for x in aut.alphabet:
            t = aut.trans[s, x]
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return True


def _check_shape(a: DeltaAutomaton, b: DeltaAutomaton) -> None:
    if not a.same_shape(b):
        raise ModelError("automata disagree on control states or alphabet")


def bool_ops(a: DeltaAutomaton, b: Optional[DeltaAutomaton], op: str) -> DeltaAutomaton:
    if op == "complement":
        return DeltaAutomaton(
            a.control_states, a.alphabet, a.states, a.init, a.trans,
            frozenset(s for s in a.states if s not in a.accepting),
        )
    if b is None:
        raise ModelError(f"{op} needs two automata")
    _check_shape(a, b)
    if op == "intersect":
        combine = lambda x, y: x and y
    elif op == "union":
        combine = lambda x, y: x or y
    else:
        raise ModelError(f"unknown boolean operation {op!r}")
    return explore(
        a.control_states,
        a.alphabet,
        {p: (a.init[p], b.init[p]) for p in a.control_states},
        lambda s, x: (a.trans[s[0], x], b.trans[s[1], x]),
        lambda s: combine(s[0] in a.accepting, s[1] in b.accepting),
    )


def complement(a: DeltaAutomaton) -> DeltaAutomaton:
    return bool_ops(a, None, "complement")


def simple_to_automaton(s: SimpleSet, ppda: PPDA) -> DeltaAutomaton:
    # state (p, last symbol read); the last symbol read is the top of the stack
    return explore(
        ppda.states,
        ppda.alphabet,
        {p: (p, EPS) for p in ppda.states},
        lambda st, x: (st[0], x),
        lambda st: st in s.base,
    )


def determinize(
    control_states: Sequence[State],
    alphabet: Sequence[Symbol],
    init: Mapping[State, Iterable[Hashable]],
    step: Callable[[Hashable, Symbol], Iterable[Hashable]],
    accepting: Callable[[Hashable], bool],
) -> DeltaAutomaton:
    """Subset construction for a nondeterministic bottom-up automaton."""
    return explore(
        control_states,
        alphabet,
        {p: frozenset(init[p]) for p in control_states},
        lambda subset, x: frozenset(t for s in subset for t in step(s, x)),
        lambda subset: any(accepting(s) for s in subset),
    )


def from_topdown(
    control_states: Sequence[State],
    alphabet: Sequence[Symbol],
    initial: Mapping[State, Hashable],
    step: Callable[[Hashable, Symbol], Optional[Hashable]],
    final: Callable[[Hashable], bool],
) -> DeltaAutomaton:
    """
    Turns a deterministic partial automaton that reads the stack top-down
    (started in initial[p], accepting pα iff reading α ends in a final
    state) into a Δ-automaton, by reversing and determinizing.

    After reading the lower part γ of the stack bottom-up, the Δ-automaton
    is in state (p, W) where W holds the top-down states from which reading
    γ ends in a final state.
    """
    universe: List[Hashable] = []
    seen = set()
    queue = deque()
    for p in control_states:
        if initial[p] not in seen:
            seen.add(initial[p])
            queue.append(initial[p])
    succ: Dict[Tuple[Hashable, Symbol], Optional[Hashable]] = {}
    while queue:
        t = queue.popleft()
        universe.append(t)
        for x in alphabet:
            u = step(t, x)
            succ[t, x] = u
            if u is not None and u not in seen:
                seen.add(u)
                queue.append(u)
    finals = frozenset(t for t in universe if final(t))
    logger.debug("top-down automaton with %d states reversed", len(universe))

    def back(state, x):
        p, good = state
        return (p, frozenset(t for t in universe if succ[t, x] is not None and succ[t, x] in good))

    return explore(
        control_states,
        alphabet,
        {p: (p, finals) for p in control_states},
        back,
        lambda state: initial[state[0]] in state[1],
    )


# --- reduction of regular sets to simple ones -------------------------------

Vector = Tuple[Tuple[Hashable, ...], ...]


@dataclass(frozen=True)
class RegSimReduction:
    """
    Product system whose stack symbols carry, for every automaton i and
    every control state p, the state automaton i reaches on the part of the
    stack below the symbol when started from p.
    """

    original: PPDA
    automata: Tuple[DeltaAutomaton, ...]
    product: PPDA
    simple_images: Tuple[SimpleSet, ...]
    initial_vector: Vector
    vectors: Tuple[Vector, ...]

    def step_vector(self, v: Vector, x: Symbol) -> Vector:
        return step_vector(self.automata, self.original.states, v, x)

    def embed(self, c: Configuration) -> Configuration:
        v = self.initial_vector
        annotated = []
        for x in reversed(c.stack):
            annotated.append((x, v))
            v = self.step_vector(v, x)
        return Configuration(c.state, tuple(reversed(annotated)))


def step_vector(automata: Sequence[DeltaAutomaton], states: Sequence[State], v: Vector, x: Symbol) -> Vector:
    return tuple(
        tuple(aut.trans[v[i][j], x] for j in range(len(states)))
        for i, aut in enumerate(automata)
    )


def reduce_to_simple(ppda: PPDA, regs: Sequence[DeltaAutomaton]) -> RegSimReduction:
    ppda.require_normalized()
    for aut in regs:
        if set(aut.control_states) != set(ppda.states) or set(aut.alphabet) != set(ppda.alphabet):
            raise ModelError("automaton does not match the system's control states and alphabet")
    regs = tuple(regs)
    states = ppda.states
    index = {p: j for j, p in enumerate(states)}
    v0: Vector = tuple(tuple(aut.init[p] for p in states) for aut in regs)

    vectors = [v0]
    seen = {v0}
    queue = deque([v0])
    while queue:
        v = queue.popleft()
        for x in ppda.alphabet:
            w = step_vector(regs, states, v, x)
            if w not in seen:
                seen.add(w)
                vectors.append(w)
                queue.append(w)

    alphabet = tuple((x, v) for v in vectors for x in ppda.alphabet)
    rules: List[Rule] = []
    for rule in ppda.rules:
        p, x = rule.lhs
        for v in vectors:
            lhs = Head(p, (x, v))
            if rule.kind == "pop":
                rhs: Tuple = ()
            elif rule.kind == "swap":
                rhs = ((rule.rhs_stack[0], v),)
            else:
                y, z = rule.rhs_stack
                rhs = ((y, step_vector(regs, states, v, z)), (z, v))
            rules.append(Rule(lhs, rule.rhs_state, rhs, rule.prob))
    product = PPDA(states, alphabet, tuple(rules))

    images = []
    for i, aut in enumerate(regs):
        pairs = [(p, EPS) for p in states if aut.init[p] in aut.accepting]
        pairs += [
            (p, (x, v))
            for v in vectors
            for x in ppda.alphabet
            for p in states
            if aut.trans[v[i][index[p]], x] in aut.accepting
        ]
        images.append(SimpleSet.of(pairs))

    logger.debug("reg-sim product: %d vectors, %d symbols, %d rules", len(vectors), len(alphabet), len(rules))
    return RegSimReduction(ppda, regs, product, tuple(images), v0, tuple(vectors))


def consistency_automaton(red: RegSimReduction) -> DeltaAutomaton:
    """Accepts exactly the annotated configurations that are images of embed."""
    dead = ("dead",)

    def step(state, symbol):
        if state == dead:
            return dead
        x, v = symbol
        return red.step_vector(v, x) if v == state else dead

    product = red.product
    return explore(
        product.states,
        product.alphabet,
        {p: red.initial_vector for p in product.states},
        step,
        lambda state: state != dead,
    )


def map_back(red: RegSimReduction, s: DeltaAutomaton) -> DeltaAutomaton:
    """Preimage of a product-level set under embed, as an automaton over the original system."""
    if set(s.alphabet) != set(red.product.alphabet):
        raise ModelError("automaton is not over the product alphabet")
    consistent = bool_ops(s, consistency_automaton(red), "intersect")
    by_symbol: Dict[Symbol, List[Symbol]] = {}
    for annotated in red.product.alphabet:
        by_symbol.setdefault(annotated[0], []).append(annotated)

    return determinize(
        red.original.states,
        red.original.alphabet,
        {p: [consistent.init[p]] for p in red.original.states},
        lambda q, x: (consistent.trans[q, a] for a in by_symbol[x]),
        lambda q: q in consistent.accepting,
    )


# --- text format -------------------------------------------------------------

def parse_automata(text: str, ppda: PPDA) -> Dict[str, DeltaAutomaton]:
    """
    Parses one or more automata:

        automaton atZ
          states z;             (control states are states too; p starts in p)
          accepting z;
          trans p Z -> z;
          trans p * -> p;       (* covers every symbol not listed for p)
    """
    ts = TokenStream(text)
    result: Dict[str, DeltaAutomaton] = {}
    while not ts.at_end():
        ts.expect("automaton")
        name = ts.ident("automaton name").text
        if name in result:
            ts.error(f"automaton {name} defined twice")
        result[name] = parse_automaton_block(ts, ppda, name)
    return result


def parse_automaton_block(ts: TokenStream, ppda: PPDA, name: str) -> DeltaAutomaton:
    names = [show(p) for p in ppda.states]
    symbols = {show(x): x for x in ppda.alphabet}
    accepting: List[str] = []
    explicit: Dict[Tuple[str, Symbol], str] = {}
    wildcard: Dict[str, str] = {}
    start = ts.peek()
    while not ts.at_end() and not ts.at("automaton") and not ts.at("atom"):
        if ts.accept("states"):
            for tok in ts.until(";"):
                if tok.text not in names:
                    names.append(tok.text)
        elif ts.accept("accepting"):
            accepting.extend(tok.text for tok in ts.until(";"))
        elif ts.accept("trans"):
            src = ts.ident("state")
            sym = ts.next()
            ts.expect("->")
            dst = ts.ident("state")
            ts.expect(";")
            for tok in (src, dst):
                if tok.text not in names:
                    ts.error(f"unknown automaton state {tok.text!r}", tok)
            if sym.text == "*":
                wildcard[src.text] = dst.text
            elif sym.text in symbols:
                explicit[src.text, symbols[sym.text]] = dst.text
            else:
                ts.error(f"unknown stack symbol {sym.text!r}", sym)
        else:
            ts.error(f"unexpected {ts.peek().text!r} in automaton {name}")
    for a in accepting:
        if a not in names:
            raise ParseError(f"accepting state {a!r} of {name} is not declared", start.line, start.column)
    trans = {}
    for s in names:
        for x in ppda.alphabet:
            target = explicit.get((s, x), wildcard.get(s))
            if target is None:
                raise ParseError(f"automaton {name}: missing transition from {s} on {show(x)}", start.line, start.column)
            trans[s, x] = target
    return DeltaAutomaton(
        tuple(ppda.states), tuple(ppda.alphabet), tuple(names),
        {p: show(p) for p in ppda.states}, trans, frozenset(accepting),
    )
