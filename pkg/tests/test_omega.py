from fractions import Fraction

import pytest

from src.ppda.errors import ModelError, ParseError
from src.ppda.intervals import Interval
from src.ppda.model import Head, parse_ppda
from src.ppda.omega import (
    BOOT_SYMBOL,
    BOTTOM,
    DropCertifier,
    Entry,
    MullerAutomaton,
    ObservingAutomaton,
    Pair,
    UnionObserver,
    bootstrap,
    build_min_chain,
    footprint,
    minima,
    minima_of_lengths,
    observe,
    parse_head_automata,
    pop_path_prob,
    product_observer,
    union_observer,
)
from tests.systems import NO_POP, SEEN_B, config, read_data

Z, I, D = Head("p", "Z"), Head("p", "I"), Head("p", "D")
A, B, C = Head("p", "A"), Head("p", "B"), Head("p", "C")

HALF_POP = """\
pbpa
alphabet A B;
A -> 1/2 eps;
A -> 1/2 B;
B -> 1 B;
"""


@pytest.fixture
def observers(walk):
    return parse_head_automata(read_data("walk.observers"), walk)


@pytest.fixture
def no_pop():
    ppda = parse_ppda(NO_POP)
    return ppda, parse_head_automata(SEEN_B, ppda)["seenB"]


# --- head automata -------------------------------------------------------------

def test_parse_observer_and_muller(observers):
    zseen, zinf = observers["zseen"], observers["zinf"]
    assert type(zseen) is ObservingAutomaton
    assert type(zinf) is MullerAutomaton
    assert zseen.init == "a0"
    assert zseen.step("a0", Z) == "a1" and zseen.step("a0", I) == "a0"
    assert zinf.acceptance == {frozenset(["b1"]), frozenset(["b0", "b1"])}
    assert observe(zseen, [I, D, Z, I]) == "a1"
    assert observe(zseen, []) == "a0"


@pytest.mark.parametrize(
    "text",
    [
        "observer o\n  states a;\n  trans a * -> a;\n",
        "observer o\n  states a;\n  init a;\n  trans a * -> b;\n",
        "observer o\n  states a b;\n  init a;\n  trans a * -> a;\n",
        "observer o\n  states a;\n  init a;\n  trans a Q -> a;\n  trans a * -> a;\n",
        "automaton o\n  states a;\n",
        "observer o\n  states a;\n  init a;\n  trans a * -> a;\nobserver o\n  states a;\n  init a;\n  trans a * -> a;\n",
    ],
)
def test_malformed_head_automata(walk, text):
    with pytest.raises(ParseError):
        parse_head_automata(text, walk)


def test_check_total_rejects_foreign_heads(observers):
    wider = parse_ppda("pbpa\nalphabet Z I D W;\nW -> 1 eps;\n")
    with pytest.raises(ModelError):
        observers["zseen"].check_total(wider)


def test_complemented_acceptance(observers, walk):
    zseen, zinf = observers["zseen"], observers["zinf"]
    assert zseen.complemented().acceptance == {frozenset(["a0"]), frozenset(["a0", "a1"])}
    assert zseen.complemented().trans == zseen.trans
    assert type(zinf.complemented()) is MullerAutomaton
    assert zinf.complemented().acceptance == {frozenset(["b0"])}
    _, observer = union_observer(walk, zinf)
    assert observer.complemented().acceptance == {frozenset(["b0"])}
    assert observer.complemented().accepting(frozenset([frozenset(["b0"])]))


# --- minima and footprints ----------------------------------------------------------

def test_drop_certifier(walk):
    certifier = DropCertifier(walk)
    assert certifier.reachable_after_pops(config("IIZ")) == [{"p"}, {"p"}, {"p"}, set()]
    assert not certifier.can_drop_below(config("IIZ"), 1)
    assert certifier.can_drop_below(config("IIZ"), 2)
    assert certifier.can_drop_below(config("IIZ"), 4)
    assert not certifier.can_drop_below(config("IIZ"), 0)


def test_minima_of_complete_and_unfinished_runs(walk):
    path = [config(w) for w in ("Z", "IZ", "IIZ", "IZ", "IIZ")]
    assert minima(path) == [0, 1, 3, 4]
    assert minima(path, horizon_complete=False, certifier=DropCertifier(walk)) == [0]
    with pytest.raises(ModelError):
        minima(path, horizon_complete=False)
    assert minima_of_lengths([3, 1, 2, 1], None) == [1, 3]
    assert minima_of_lengths([], None) == []


def test_footprint_of_a_walk_prefix(observers):
    zseen = observers["zseen"]
    path = [config(w) for w in ("Z", "IZ", "Z", "DZ")]
    assert footprint(path, zseen, terminated=False) == [
        Entry(Z), Pair(Z, "a0"), Pair(Z, "a1"), Pair(D, "a0"),
    ]
    assert footprint(path[:2], zseen, terminated=True) == [Entry(Z), BOTTOM]


def test_footprint_needs_a_single_symbol_start(observers):
    with pytest.raises(ModelError):
        footprint([config("IZ")], observers["zseen"], terminated=False)
    with pytest.raises(ModelError):
        footprint([], observers["zseen"], terminated=False)


# --- products and bootstrap -----------------------------------------------------------

def test_product_with_observer(walk, observers):
    product = product_observer(walk, observers["zseen"])
    assert set(product.states) == {("p", "a0"), ("p", "a1")}
    assert len(product.rules) == 2 * len(walk.rules)
    moved = [r for r in product.rules if r.lhs == Head(("p", "a0"), "Z")]
    assert {r.rhs_state for r in moved} == {("p", "a1")}


def test_union_observer_collects_muller_states(walk, observers):
    product, observer = union_observer(walk, observers["zinf"])
    assert isinstance(observer, UnionObserver)
    assert observer.init == frozenset()
    assert set(observer.states) == {frozenset(), frozenset(["b0"]), frozenset(["b1"]), frozenset(["b0", "b1"])}
    assert observer.accepting(frozenset([frozenset(["b1"])]))
    assert observer.accepting(frozenset([frozenset(["b0"]), frozenset(["b1"])]))
    assert not observer.accepting(frozenset([frozenset(["b0"])]))
    assert observer.step(frozenset(), Head(("p", "b1"), "I")) == frozenset(["b1"])


def test_bootstrap_wraps_longer_stacks(walk, observers):
    zseen = observers["zseen"]
    assert bootstrap(walk, zseen, config("Z")) == (walk, zseen, Z)
    wrapped, obs, head = bootstrap(walk, zseen, config("IIZ"))
    assert head == Head("p", BOOT_SYMBOL)
    assert BOOT_SYMBOL in wrapped.alphabet
    assert obs.step("a0", head) == "a0"
    obs.check_total(wrapped)
    with pytest.raises(ModelError):
        bootstrap(walk, zseen, config(""))


# --- the minima chain ------------------------------------------------------------------

def test_chain_of_system_without_pops(no_pop, interval_oracle):
    ppda, seen_b = no_pop
    chain = build_min_chain(ppda, seen_b, oracle=interval_oracle, entries=[A])
    assert chain.states == (BOTTOM, Entry(A), Pair(A, "a0"), Pair(B, "a1"), Pair(C, "a0"))
    assert chain.edges[Entry(A)] == {Pair(A, "a0"): (Interval.point(1), True)}
    out = chain.edges[Pair(A, "a0")]
    assert out[Pair(A, "a0")].prob == Interval.point(Fraction(1, 2))
    assert out[Pair(B, "a1")].prob == Interval.point(Fraction(1, 4))
    assert out[Pair(C, "a0")].prob == Interval.point(Fraction(1, 4))
    assert all(chain.sum_brackets_one(s) for s in chain.states)
    assert chain.has_edge(Pair(B, "a1"), Pair(B, "a1"))
    assert not chain.has_edge(Pair(B, "a1"), BOTTOM)
    assert chain.dump().startswith("state ⊥\n  -> ⊥ [1, 1]\n")
    assert len(chain.to_json()["edges"]) == 1 + 1 + 3 + 1 + 1


def test_pop_path_probabilities(interval_oracle):
    ppda = parse_ppda(HALF_POP)
    seen_b = parse_head_automata(SEEN_B, ppda)["seenB"]
    assert pop_path_prob(ppda, seen_b, A, "p", "A", "a0", oracle=interval_oracle) == Interval.point(Fraction(1, 2))
    assert pop_path_prob(ppda, seen_b, A, "p", "B", "a1", oracle=interval_oracle) == Interval.point(Fraction(1, 2))
    assert pop_path_prob(ppda, seen_b, A, "p", "A", "a1", oracle=interval_oracle) == Interval.point(0)
    assert pop_path_prob(ppda, seen_b, B, "p", "A", "a0", oracle=interval_oracle) == Interval.point(0)


def test_chain_of_terminating_system(interval_oracle):
    ppda = parse_ppda(HALF_POP)
    seen_b = parse_head_automata(SEEN_B, ppda)["seenB"]
    chain = build_min_chain(ppda, seen_b, oracle=interval_oracle, entries=[A])
    assert chain.edges[Entry(A)][BOTTOM].prob == Interval.point(Fraction(1, 2))
    assert chain.edges[Entry(A)][Pair(A, "a0")].prob == Interval.point(Fraction(1, 2))
    assert chain.edges[Pair(A, "a0")] == {Pair(B, "a1"): (Interval.point(1), True)}
    assert chain.edges[BOTTOM] == {BOTTOM: (Interval.point(1), True)}
