from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.ppda.equations import (
    BULLET,
    Polynomial,
    VarId,
    boolean_abstraction,
    build_until_system,
    evaluate,
    pop_targets,
    until_expression,
)
from src.ppda.errors import ModelError
from src.ppda.model import Head, parse_ppda
from src.ppda.regsets import SimpleSet
from tests.systems import ATZ, bounded_search, config, make_walk, pop_saturation, ppdas, simple_sets

I_POP = VarId(Head("p", "I"), "p")
I_HIT = VarId(Head("p", "I"), BULLET)


@pytest.mark.parametrize("x", [Fraction(1, 3), Fraction(1, 2), Fraction(3, 4)], ids=str)
def test_termination_equation_of_walk(x):
    ppda = make_walk(x)
    system = build_until_system(ppda, SimpleSet.everything(ppda), SimpleSet.empty_stack(ppda))
    expected = Polynomial.constant(1 - x) + Polynomial({(I_POP, I_POP): x})
    assert system.poly(I_POP) == expected
    assert not system.pinned


def test_target_heads_are_pinned():
    ppda = make_walk(Fraction(1, 2))
    system = build_until_system(ppda, SimpleSet.everything(ppda), ATZ)
    z = Head("p", "Z")
    assert system.pinned[VarId(z, BULLET)] == 1
    assert system.pinned[VarId(z, "p")] == 0
    assert VarId(z, BULLET) not in system.vars
    # pinned values are substituted, so Z never occurs on a right-hand side
    assert all(v.head != z for u in system.vars for v in system.rhs[u].variables)


def test_heads_outside_c1_are_zero():
    ppda = make_walk(Fraction(1, 2))
    only_z = SimpleSet.of([("p", "Z")])
    system = build_until_system(ppda, only_z, SimpleSet.empty_stack(ppda))
    assert system.pinned[I_POP] == 0
    assert system.pinned[I_HIT] == 0


def test_evaluate_from_zero_gives_constant_terms():
    x = Fraction(1, 3)
    ppda = make_walk(x)
    system = build_until_system(ppda, SimpleSet.everything(ppda), SimpleSet.empty_stack(ppda))
    step = evaluate(system, {v: Fraction(0) for v in system.vars})
    assert step[I_POP] == 1 - x
    assert step[VarId(Head("p", "D"), "p")] == x
    step = evaluate(system, {v: Fraction(1) for v in system.vars})
    assert all(value <= 1 for value in step.values())


def test_until_expression_follows_the_stack():
    ppda = make_walk(Fraction(1, 2))
    system = build_until_system(ppda, SimpleSet.everything(ppda), ATZ)
    assert until_expression(system, config("IZ")) == Polynomial.var(I_HIT) + Polynomial.var(I_POP)
    assert until_expression(system, config("Z")) == Polynomial.constant(1)
    assert until_expression(system, config("")) == Polynomial.constant(0)

    to_empty = build_until_system(ppda, SimpleSet.everything(ppda), SimpleSet.empty_stack(ppda))
    assert until_expression(to_empty, config("")) == Polynomial.constant(1)
    assert until_expression(to_empty, config("II")) == Polynomial({(I_POP, I_POP): 1}) + Polynomial(
        {(I_HIT,): 1, (I_POP, I_HIT): 1}
    )


def test_system_requires_normalized_input():
    raw = parse_ppda("pbpa\nalphabet X;\nX -> 1 X X X;\n")
    with pytest.raises(ModelError):
        build_until_system(raw, SimpleSet.everything(raw), SimpleSet.empty_stack(raw))


def test_polynomial_rendering():
    p = Polynomial.constant(Fraction(1, 2)) + Polynomial.var(I_POP, Fraction(1, 2)) * Polynomial.var(I_POP)
    assert str(p) == "1/2 + 1/2*<p,I,p>*<p,I,p>"
    assert str(Polynomial()) == "0"
    assert p.degree == 2 and p.is_monotone


@given(st.data())
def test_boolean_abstraction_matches_search(data):
    ppda = data.draw(ppdas())
    c1 = data.draw(simple_sets(ppda))
    c2 = data.draw(simple_sets(ppda))
    truth = boolean_abstraction(build_until_system(ppda, c1, c2)).least_fixed_point()

    pops = {(v.head, v.target) for v in truth if not v.is_bullet}
    assert pops == set(pop_saturation(ppda, c1, c2))
    for head in ppda.heads:
        popped, hits = bounded_search(ppda, c1, c2, head)
        assert popped <= pop_targets(truth, head, ppda.states)
        if hits:
            assert VarId(head, BULLET) in truth
