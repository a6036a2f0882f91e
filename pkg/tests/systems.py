"""
Systems, strategies and brute-force reference computations shared by the
tests. The reference computations avoid the library's fixed-point
machinery: they search or solve finite Markov chains directly.
"""

import os
from collections import deque
from fractions import Fraction
from typing import Dict, FrozenSet, List, Sequence, Set, Tuple

from hypothesis import strategies as st

from src.ppda.model import PPDA, Configuration, Head, Rule, normalize, parse_ppda
from src.ppda.regsets import EPS, SimpleSet

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
WALK_XS = (Fraction(1, 3), Fraction(1, 2), Fraction(2, 3), Fraction(3, 4))
ATZ = SimpleSet.of([("p", "Z")])

# A loops, then settles in B or C for good; nothing is ever popped
NO_POP = """\
pbpa
alphabet A B C;
A -> 1/2 A;
A -> 1/4 B;
A -> 1/4 C;
B -> 1 B;
C -> 1 C;
"""

SEEN_B = """\
observer seenB
  states a0 a1;
  init a0;
  trans a0 B -> a1;
  trans a0 * -> a0;
  trans a1 * -> a1;
  acceptance {a1};
"""


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def read_data(name: str) -> str:
    with open(data_path(name)) as f:
        return f.read()


def load_walk(x: Fraction) -> PPDA:
    return normalize(parse_ppda(read_data(f"walk_{x.numerator}_{x.denominator}.ppda")))


def make_walk(x) -> PPDA:
    """The Bernoulli walk for any 0 < x < 1, built without the data files."""
    x = Fraction(x)
    y = 1 - x
    rule = lambda lhs, prob, *rhs: Rule(Head("p", lhs), "p", rhs, prob)
    return PPDA(
        ("p",),
        ("Z", "I", "D"),
        (
            rule("Z", x, "I", "Z"),
            rule("Z", y, "D", "Z"),
            rule("I", x, "I", "I"),
            rule("I", y),
            rule("D", y, "D", "D"),
            rule("D", x),
        ),
    )


def config(word: str, state: str = "p") -> Configuration:
    return Configuration(state, tuple(word))


# --- strategies -----------------------------------------------------------------

STATE_NAMES = ("p", "q")
SYMBOL_NAMES = ("A", "B", "C", "E", "F")


def _split(weights: Sequence[int]) -> List[Fraction]:
    total = sum(weights)
    return [Fraction(w, total) for w in weights]


@st.composite
def ppdas(draw, max_states: int = 2, max_symbols: int = 3, max_rules: int = 3) -> PPDA:
    """Normalized pPDA; every head is either stuck or has rules summing to one."""
    states = STATE_NAMES[: draw(st.integers(1, max_states))]
    symbols = SYMBOL_NAMES[: draw(st.integers(1, max_symbols))]
    rhs = st.tuples(
        st.sampled_from(states),
        st.lists(st.sampled_from(symbols), max_size=2).map(tuple),
    )
    rules: List[Rule] = []
    for p in states:
        for x in symbols:
            if draw(st.integers(0, 4)) == 0:
                continue
            targets = draw(st.lists(rhs, min_size=1, max_size=max_rules, unique=True))
            weights = draw(st.lists(st.integers(1, 3), min_size=len(targets), max_size=len(targets)))
            for (q, stack), prob in zip(targets, _split(weights)):
                rules.append(Rule(Head(p, x), q, stack, prob))
    return PPDA(states, symbols, tuple(rules))


@st.composite
def simple_sets(draw, ppda: PPDA) -> SimpleSet:
    pairs = [tuple(h) for h in ppda.heads] + [(p, EPS) for p in ppda.states]
    return SimpleSet.of(draw(st.lists(st.sampled_from(pairs), unique=True)))


@st.composite
def bounded_pbpas(draw, max_symbols: int = 5) -> PPDA:
    """
    pBPA with pop and swap rules only, so stacks never grow. Symbols are
    stuck, pop with probability one, or pop with probability 1/4 or 1/2 and
    otherwise swap to a stuck or popping symbol; every termination value
    below one is then at most 1/2.
    """
    n = draw(st.integers(2, max_symbols))
    symbols = SYMBOL_NAMES[:n]
    kinds = draw(st.lists(st.sampled_from(["stuck", "pop", "mixed"]), min_size=n, max_size=n))
    leaves = [x for x, k in zip(symbols, kinds) if k != "mixed"]
    rules: List[Rule] = []
    for x, kind in zip(symbols, kinds):
        if kind == "pop":
            rules.append(Rule(Head("p", x), "p", (), Fraction(1)))
        elif kind == "mixed":
            a = draw(st.sampled_from([Fraction(1, 4), Fraction(1, 2)]))
            rules.append(Rule(Head("p", x), "p", (), a))
            if leaves:
                target = draw(st.sampled_from(leaves))
                rules.append(Rule(Head("p", x), "p", (target,), 1 - a))
    return PPDA(("p",), symbols, tuple(rules))


# --- reference computations ----------------------------------------------------------

def solve(equations: Dict[str, Tuple[Fraction, Dict[str, Fraction]]]) -> Dict[str, Fraction]:
    """
    Least non-negative solution of x = c + Σ a·y for an absorbing chain:
    variables that cannot reach a positive constant are 0, the rest solved
    by Gauss-Jordan elimination over the rationals.
    """
    live: Set[str] = {v for v, (c, _) in equations.items() if c > 0}
    changed = True
    while changed:
        changed = False
        for v, (_, coeffs) in equations.items():
            if v not in live and any(u in live and a > 0 for u, a in coeffs.items()):
                live.add(v)
                changed = True
    order = sorted(live)
    index = {v: i for i, v in enumerate(order)}
    n = len(order)
    rows = []
    for v in order:
        c, coeffs = equations[v]
        row = [Fraction(0)] * (n + 1)
        row[index[v]] += 1
        for u, a in coeffs.items():
            if u in index:
                row[index[u]] -= a
        row[n] = c
        rows.append(row)
    for col in range(n):
        pivot = next(r for r in range(col, n) if rows[r][col] != 0)
        rows[col], rows[pivot] = rows[pivot], rows[col]
        rows[col] = [x / rows[col][col] for x in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    solution = {v: Fraction(0) for v in equations}
    solution.update({v: rows[index[v]][n] for v in order})
    return solution


class BoundedUntil:
    """
    Exact P(c, C1 U C2) for a pBPA whose rules never push: the run of a
    single symbol is a finite absorbing chain, and the value of a word
    follows from P(Xβ) = hit(X) + pop(X)·P(β).
    """

    def __init__(self, pbpa: PPDA, c1: SimpleSet, c2: SimpleSet):
        assert pbpa.is_pbpa and all(len(r.rhs_stack) <= 1 for r in pbpa.rules)
        self.p = pbpa.states[0]
        self.c2_eps = (self.p, EPS) in c2.base
        hit_eqs, pop_eqs = {}, {}
        for x in pbpa.alphabet:
            head = (self.p, x)
            if head in c2.base:
                hit_eqs[x], pop_eqs[x] = (Fraction(1), {}), (Fraction(0), {})
            elif head not in c1.base:
                hit_eqs[x], pop_eqs[x] = (Fraction(0), {}), (Fraction(0), {})
            else:
                swaps: Dict[str, Fraction] = {}
                popped = Fraction(0)
                for r in pbpa.outgoing(Head(self.p, x)):
                    if r.rhs_stack:
                        swaps[r.rhs_stack[0]] = swaps.get(r.rhs_stack[0], Fraction(0)) + r.prob
                    else:
                        popped += r.prob
                hit_eqs[x], pop_eqs[x] = (Fraction(0), swaps), (popped, swaps)
        self.hit = solve(hit_eqs)
        self.pop = solve(pop_eqs)

    def __call__(self, c: Configuration) -> Fraction:
        value = Fraction(1 if self.c2_eps else 0)
        for x in reversed(c.stack):
            value = self.hit[x] + self.pop[x] * value
        return value


def pop_saturation(ppda: PPDA, c1: SimpleSet, c2: SimpleSet) -> FrozenSet[Tuple[Head, str]]:
    """(pX, q) such that pX can empty its stack into q through C1 ∖ C2, by worklist saturation."""
    inside = {h for h in ppda.heads if tuple(h) in c1.base and tuple(h) not in c2.base}
    known: Set[Tuple[Head, str]] = set()
    changed = True
    while changed:
        changed = False
        for r in ppda.rules:
            if r.lhs not in inside:
                continue
            if len(r.rhs_stack) == 0:
                found = {r.rhs_state}
            elif len(r.rhs_stack) == 1:
                found = {q for h, q in known if h == Head(r.rhs_state, r.rhs_stack[0])}
            else:
                y, z = r.rhs_stack
                mids = {t for h, t in known if h == Head(r.rhs_state, y)}
                found = {q for h, q in known for t in mids if h == Head(t, z)}
            for q in found:
                if (r.lhs, q) not in known:
                    known.add((r.lhs, q))
                    changed = True
    return frozenset(known)


def bounded_search(
    ppda: PPDA, c1: SimpleSet, c2: SimpleSet, head: Head, max_stack: int = 6, max_depth: int = 200
) -> Tuple[Set[str], bool]:
    """
    Breadth-first search from pX through configurations with heads in
    C1 ∖ C2 and at most `max_stack` symbols. Returns the control states in
    which X was seen popped, and whether a head in C2 was reached first.
    """
    inside = lambda h: tuple(h) in c1.base and tuple(h) not in c2.base
    start = Configuration(head.state, (head.symbol,))
    seen = {start}
    frontier = [start]
    popped: Set[str] = set()
    hits = False
    for _ in range(max_depth):
        nxt = []
        for c in frontier:
            if tuple(c.head) in c2.base:
                hits = True
                continue
            if not inside(c.head):
                continue
            for r in ppda.outgoing(c.head):
                d = Configuration(r.rhs_state, r.rhs_stack + c.stack[1:])
                if not d.stack:
                    popped.add(d.state)
                elif len(d.stack) <= max_stack and d not in seen:
                    seen.add(d)
                    nxt.append(d)
        frontier = nxt
        if not frontier:
            break
    return popped, hits


def reachable_configurations(ppda: PPDA, start: Configuration, limit: int, max_stack: int = 5) -> List[Configuration]:
    """Configurations reachable from start, breadth first, with bounded stacks."""
    seen = {start}
    queue = deque([start])
    result = []
    while queue and len(result) < limit:
        c = queue.popleft()
        result.append(c)
        if not c.stack:
            continue
        for r in ppda.outgoing(c.head):
            d = Configuration(r.rhs_state, r.rhs_stack + c.stack[1:])
            if len(d.stack) <= max_stack and d not in seen:
                seen.add(d)
                queue.append(d)
    return result
