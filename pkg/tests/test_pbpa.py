from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.ppda.errors import ModelError
from src.ppda.intervals import Interval
from src.ppda.model import Configuration, parse_ppda
from src.ppda.pbpa import (
    Answer,
    ApproxParams,
    build_G,
    build_threshold_automaton,
    check_error_tolerant,
    compute_params,
    error_tolerant_set,
    least_power,
    sat_next_quant,
    word_probability,
)
from src.ppda.pctl import RegularValuation, parse_formula
from src.ppda.regsets import SimpleSet, simple_to_automaton
from src.ppda.settings import Settings
from src.ppda.solver import Oracle, Rel
from tests.systems import BoundedUntil, bounded_pbpas, config, load_walk, make_walk, simple_sets

THRESHOLDS = [Fraction(0), Fraction(1, 8), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2), Fraction(3, 4), Fraction(1)]

# A halves, B is transparent
HALVING = """\
pbpa
alphabet A B;
A -> 1/2 eps;
A -> 1/2 A A;
B -> 1 eps;
"""


def valuation(ppda, **sets):
    atoms = {name: simple_to_automaton(s, ppda) for name, s in sets.items()}
    return RegularValuation(ppda, atoms, dict(sets))


@pytest.fixture
def halving_params():
    return ApproxParams(
        symbols=("A",),
        n=2,
        kappa=Fraction(1, 2),
        nu=Fraction(0),
        lam=Fraction(3, 10),
        eps={"A": Interval.point(Fraction(1, 2))},
        bullet={"A": Interval.point(0)},
        empty_in_target=True,
        passes=1,
    )


@pytest.mark.parametrize(
    "kappa, target, n",
    [
        (Fraction(0), Fraction(1, 100), 1),
        (Fraction(1, 2), Fraction(1, 12), 4),
        (Fraction(1, 3), Fraction(1, 9), 2),
        (Fraction(1, 3), Fraction(1, 10), 3),
        (Fraction(99, 100), Fraction(1, 2), 69),
    ],
)
def test_least_power(kappa, target, n):
    assert least_power(kappa, target) == n
    assert kappa ** n <= target
    assert n == 1 or kappa ** (n - 1) > target


def test_word_probability(halving_params):
    assert word_probability(halving_params, (), True) == 1
    assert word_probability(halving_params, ("A", "A"), False) == Fraction(1, 4)
    wide = halving_params.model_copy(update={"eps": {"A": Interval(Fraction(1, 4), Fraction(1, 2))}})
    assert word_probability(wide, ("A",), False) == Fraction(1, 4)
    assert word_probability(wide, ("A",), True) == Fraction(1, 2)


def test_build_G_relaxes_only_at_full_length(halving_params):
    assert build_G(halving_params, Fraction(1, 2), Rel.GE) == {(), ("A",)}
    assert build_G(halving_params, Fraction(1, 3), Rel.GE) == {(), ("A",), ("A", "A")}
    assert build_G(halving_params, Fraction(1, 4), Rel.LE) == {("A", "A")}
    assert build_G(halving_params, Fraction(1, 5), Rel.LE) == {("A", "A")}
    with pytest.raises(ModelError):
        build_G(halving_params, Fraction(1, 2), Rel.EQ)


def test_threshold_automaton_reads_the_top_n_symbols(halving_params):
    pbpa = parse_ppda(HALVING)
    above = build_threshold_automaton(build_G(halving_params, Fraction(1, 2), Rel.GE), halving_params, pbpa)
    below = build_threshold_automaton(build_G(halving_params, Fraction(1, 4), Rel.LE), halving_params, pbpa)
    assert config("") in above and config("A") in above and config("BAB") in above
    assert config("AA") not in above and config("ABA") not in above
    assert config("AA") in below and config("AAAB") in below and config("BABAA") in below
    assert config("A") not in below and config("") not in below


def test_next_with_threshold_is_exact():
    walk = make_walk(Fraction(1, 3))
    aut = sat_next_quant(walk, SimpleSet.of([("p", "Z")]), Rel.GE, Fraction(1, 2))
    assert config("IZ") in aut
    assert config("DZ") not in aut
    assert config("Z") not in aut and config("IIZ") not in aut


def test_rejects_non_pbpa_and_bad_tolerance(interval_oracle):
    ppda = parse_ppda("ppda\nstates p q;\nalphabet X;\np X -> 1 q eps;\n")
    nu = valuation(ppda, a=SimpleSet.everything(ppda), b=SimpleSet.empty_stack(ppda))
    phi = parse_formula("a U[>=1/2] b")
    with pytest.raises(ModelError):
        error_tolerant_set(ppda, phi, nu, Fraction(1, 10), interval_oracle)
    pbpa = parse_ppda(HALVING)
    nu = valuation(pbpa, a=SimpleSet.everything(pbpa), b=SimpleSet.empty_stack(pbpa))
    for lam in (Fraction(0), Fraction(1), Fraction(3, 2)):
        with pytest.raises(ModelError):
            error_tolerant_set(pbpa, phi, nu, lam, interval_oracle)


def test_check_error_tolerant_on_linear_system(interval_oracle):
    pbpa = parse_ppda("pbpa\nalphabet A B C;\nA -> 1/2 eps;\nA -> 1/2 C;\nB -> 1 eps;\n")
    nu = valuation(pbpa, a=SimpleSet.everything(pbpa), b=SimpleSet.empty_stack(pbpa))
    phi = parse_formula("a U[>=1/4] b")
    # [A,eps] = 1/2 and [B,eps] = 1; C is stuck
    yes = check_error_tolerant(pbpa, phi, nu, config("AAB"), Fraction(1, 10), interval_oracle)
    no = check_error_tolerant(pbpa, phi, nu, config("AAAB"), Fraction(1, 10), interval_oracle)
    assert yes.answer is Answer.YES
    assert no.answer is Answer.NO
    [summary] = yes.untils
    assert summary.kappa == Fraction(1, 2)
    assert summary.symbols == 2
    assert yes.formula == "(a U[>=1/4] b)"
    with pytest.raises(ModelError):
        check_error_tolerant(pbpa, phi, nu, config("AQ"), Fraction(1, 10), interval_oracle)


@given(st.data())
def test_tolerant_set_is_sandwiched_by_exact_values(data):
    pbpa = data.draw(bounded_pbpas())
    c1 = data.draw(simple_sets(pbpa))
    c2 = data.draw(simple_sets(pbpa))
    rel = data.draw(st.sampled_from([Rel.GE, Rel.GT, Rel.LE, Rel.LT]))
    rho = data.draw(st.sampled_from(THRESHOLDS))
    lam = data.draw(st.sampled_from([Fraction(1, 4), Fraction(1, 10)]))
    oracle = Oracle(Settings(solver_cmd=None, backend="intervals"))
    phi = parse_formula(f"a U[{rel.value}{rho}] b")
    aut, _, _ = error_tolerant_set(pbpa, phi, valuation(pbpa, a=c1, b=c2), lam, oracle)
    exact = BoundedUntil(pbpa, c1, c2)

    words = (w for k in range(6) for w in product(pbpa.alphabet, repeat=k))
    for word in words:
        c = Configuration("p", word)
        value = exact(c)
        if rel.holds(value, rho):
            assert c in aut, f"{c}: {value} {rel.value} {rho} but rejected"
        if c in aut and rel in (Rel.GE, Rel.GT):
            assert value >= rho - lam
        elif c in aut:
            assert value <= rho + lam


@pytest.mark.solver
@pytest.mark.parametrize("lam", [Fraction(1, 4), Fraction(1, 10)], ids=str)
def test_parameters_of_drifting_walk(oracle, lam):
    walk = load_walk(Fraction(2, 3))
    params = compute_params(walk, SimpleSet.everything(walk), SimpleSet.empty_stack(walk), lam, oracle)
    assert params.symbols == ("Z", "I")
    assert params.eps["Z"] == Interval.point(0)
    assert Fraction(1, 2) in params.eps["I"]
    assert Fraction(1, 2) <= params.kappa < 1
    n, nu = params.n, params.nu
    assert n * (nu + nu * (n + 1) * (1 + nu) ** n) <= lam / 3
    assert params.kappa ** n <= lam / 3
    lengths = [n for _, n in params.trace if n is not None]
    assert lengths == sorted(lengths, reverse=True)
