from fractions import Fraction

import pytest

from src.ppda.errors import ModelError
from src.ppda.mc import acceptance_probability
from src.ppda.model import Head, parse_ppda
from src.ppda.omega import build_min_chain, parse_head_automata
from src.ppda.regsets import SimpleSet, parse_automata
from src.ppda.sim import Estimate, estimate_acceptance, estimate_until, sample_run
from tests.systems import ATZ, NO_POP, SEEN_B, WALK_XS, config, load_walk, read_data

SWAPPING = """\
pbpa
alphabet A B;
A -> 1 B A;
B -> 1 eps;
"""


@pytest.fixture
def drifting():
    return load_walk(Fraction(2, 3))


def test_runs_are_reproducible(drifting):
    first = sample_run(drifting, config("IZ"), 50, seed=7)
    assert first == sample_run(drifting, config("IZ"), 50, seed=7)
    assert first.path[0] == config("IZ")
    assert len(first.steps) == 51
    others = [sample_run(drifting, config("IZ"), 50, seed=7, stream=i).path for i in range(5)]
    assert len({tuple(p) for p in others}) > 1


def test_single_rule_system_runs_deterministically():
    ppda = parse_ppda(SWAPPING)
    run = sample_run(ppda, config("A"), 4, seed=0)
    assert run.path == [config(w) for w in ("A", "BA", "A", "BA", "A")]
    assert [i for _, i in run.steps] == [0, 0, 0, 0, None]
    assert run.truncated and not run.terminated
    done = sample_run(ppda, config("B"), 10, seed=0)
    assert done.path == [config("B"), config("")]
    assert done.terminated and not done.truncated
    assert done.last == config("")


def test_sample_run_rejects_bad_arguments(drifting):
    with pytest.raises(ModelError):
        sample_run(drifting, config("IZ"), 0, seed=1)
    with pytest.raises(ModelError):
        sample_run(drifting, config("IQ"), 10, seed=1)


def test_estimate_replays_sampled_runs(drifting, interval_oracle):
    runs, horizon = 30, 40
    everything, empty = SimpleSet.everything(drifting), SimpleSet.empty_stack(drifting)
    estimate = estimate_until(drifting, everything, empty, config("I"), runs, horizon, seed=3, oracle=interval_oracle)
    replay = sum(sample_run(drifting, config("I"), horizon, seed=3, stream=i).terminated for i in range(runs))
    assert estimate.estimate == Fraction(replay, runs)


def test_trivial_estimates(drifting, interval_oracle):
    everything = SimpleSet.everything(drifting)
    sure = estimate_until(drifting, everything, everything, config("IIZ"), runs=50, oracle=interval_oracle)
    assert sure == Estimate(estimate=Fraction(1), stderr=Fraction(0), undetermined=0, runs=50)
    ppda = parse_ppda(NO_POP)
    never = estimate_until(
        ppda, SimpleSet.everything(ppda), SimpleSet.empty_stack(ppda), config("A"), runs=50, oracle=interval_oracle
    )
    assert never == Estimate(estimate=Fraction(0), stderr=Fraction(0), undetermined=0, runs=50)


def test_regular_target_matches_simple_target(drifting, interval_oracle):
    at_z = parse_automata(read_data("walk.automata"), drifting)["atZ"]
    everything = SimpleSet.everything(drifting)
    simple = estimate_until(drifting, everything, ATZ, config("IIZ"), 200, 300, seed=5, oracle=interval_oracle)
    regular = estimate_until(drifting, everything, at_z, config("IIZ"), 200, 300, seed=5, oracle=interval_oracle)
    assert simple == regular


# --- agreement with certified brackets ---------------------------------------------

MC_HORIZON = 1000


def assert_within(estimate, certified):
    slack = 3 * estimate.stderr + Fraction(estimate.undetermined, estimate.runs)
    assert certified.lo - slack <= estimate.estimate <= certified.hi + slack


@pytest.mark.slow
@pytest.mark.parametrize("x", WALK_XS, ids=str)
def test_walk_frequencies_agree_with_brackets(x, interval_oracle, mc_runs):
    walk = load_walk(x)
    everything, empty = SimpleSet.everything(walk), SimpleSet.empty_stack(walk)
    for c2, start in ((ATZ, config("IIZ")), (empty, config("I")), (empty, config("D"))):
        certified = interval_oracle.until_probability(walk, everything, c2, start, Fraction(1, 100))
        estimate = estimate_until(walk, everything, c2, start, mc_runs, MC_HORIZON, seed=11, oracle=interval_oracle)
        assert_within(estimate, certified)


@pytest.mark.slow
def test_acceptance_frequency_of_system_without_pops(interval_oracle, mc_runs):
    ppda = parse_ppda(NO_POP)
    seen_b = parse_head_automata(SEEN_B, ppda)["seenB"]
    for head in (Head("p", "A"), Head("p", "B"), Head("p", "C")):
        chain = build_min_chain(ppda, seen_b, oracle=interval_oracle, entries=[head])
        certified = acceptance_probability(ppda, seen_b, head, oracle=interval_oracle)
        estimate = estimate_acceptance(ppda, seen_b, head, mc_runs, MC_HORIZON, seed=4, chain=chain)
        assert estimate.unsupported == 0
        assert_within(estimate, certified)


@pytest.mark.slow
@pytest.mark.solver
@pytest.mark.parametrize("x", WALK_XS, ids=str)
def test_walk_acceptance_frequencies_agree_with_brackets(x, oracle, mc_runs):
    walk = load_walk(x)
    zseen = parse_head_automata(read_data("walk.observers"), walk)["zseen"]
    z = Head("p", "Z")
    chain = build_min_chain(walk, zseen, oracle=oracle, entries=[z])
    certified = acceptance_probability(walk, zseen, z, oracle=oracle)
    estimate = estimate_acceptance(walk, zseen, z, mc_runs, MC_HORIZON, seed=8, chain=chain)
    assert estimate.unsupported == 0
    assert_within(estimate, certified)


def test_acceptance_estimate_of_a_rejecting_head(interval_oracle):
    ppda = parse_ppda(NO_POP)
    seen_b = parse_head_automata(SEEN_B, ppda)["seenB"]
    never = estimate_acceptance(ppda, seen_b, Head("p", "C"), 20, 50, oracle=interval_oracle)
    assert never.estimate == 0 and never.runs == 20
