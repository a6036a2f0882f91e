"""
Monte Carlo sampling of runs.

Every run draws from its own numpy `Generator(PCG64)` seeded through a
`SeedSequence`; run i of an estimate uses spawn key (i,), so a single run of
an estimate can be replayed with `sample_run(..., seed, stream=i)`. Rules are
chosen by comparing a 53-bit uniform integer against the cumulative rule
probabilities scaled to integers, so the choice itself is exact.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from .constants import DEFAULT_HORIZON, DEFAULT_RUNS, UNIFORM_BITS
from .errors import ModelError
from .intervals import Interval
from .mc import bsccs
from .model import PPDA, Configuration, Head, Rule, Symbol
from .omega import BOTTOM, ChainBuilder, DropCertifier, HeadAutomaton, MinChain, footprint_of
from .regsets import EPS, DeltaAutomaton, SimpleSet
from .solver import ONE, ZERO, Oracle, check_configuration

logger = logging.getLogger(__name__)

ConfigSet = Union[SimpleSet, DeltaAutomaton]

_SCALE = 1 << UNIFORM_BITS
_CHUNK = 256


@dataclass(frozen=True)
class RunSample:
    seed: int
    steps: Tuple[Tuple[Configuration, Optional[int]], ...]
    terminated: bool
    truncated: bool

    @property
    def path(self) -> List[Configuration]:
        return [c for c, _ in self.steps]

    @property
    def last(self) -> Configuration:
        return self.steps[-1][0]


class Estimate(BaseModel):
    """Frequency over `runs` samples; undetermined runs count as failures."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    estimate: Fraction
    stderr: Fraction
    undetermined: int
    runs: int

    def interval(self, sigmas: int = 3) -> Interval:
        """estimate ± sigmas·stderr, widened upward by the undetermined share."""
        spread = sigmas * self.stderr
        lo = max(ZERO, self.estimate - spread)
        hi = min(ONE, self.estimate + spread + Fraction(self.undetermined, max(self.runs, 1)))
        return Interval(lo, hi)


class AcceptanceEstimate(Estimate):
    # footprint transitions that are not positive edges of the chain
    unsupported: int = 0


def generator(seed: int, stream: Optional[int] = None) -> np.random.Generator:
    key = () if stream is None else (stream,)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


class _Uniforms:
    """Uniform integers below 2^53, drawn from the generator in fixed-size chunks."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buffer: List[int] = []
        self.pos = 0

    def next(self) -> int:
        if self.pos == len(self.buffer):
            self.buffer = self.rng.integers(0, _SCALE, size=_CHUNK, dtype=np.int64).tolist()
            self.pos = 0
        self.pos += 1
        return self.buffer[self.pos - 1]


class _RuleTable:
    """Per head: the rules and their cumulative probabilities scaled to 2^53."""

    def __init__(self, ppda: PPDA):
        self.table: Dict[Head, Tuple[Tuple[Rule, ...], Tuple[int, ...]]] = {}
        for head in ppda.heads:
            rules = ppda.outgoing(head)
            if not rules:
                continue
            cumulative, total = [], ZERO
            for r in rules:
                total += r.prob
                cumulative.append(math.ceil(total * _SCALE))
            self.table[head] = (rules, tuple(cumulative))

    def choose(self, draws: _Uniforms, head: Head) -> Optional[Tuple[int, Rule]]:
        entry = self.table.get(head)
        if entry is None:
            return None
        rules, cumulative = entry
        k = draws.next()
        for i, bound in enumerate(cumulative):
            if k < bound:
                return i, rules[i]
        # mass missing from an unvalidated head goes to its last rule
        return len(rules) - 1, rules[-1]


class _Membership:
    """
    Membership of the walker's current configuration in a set. A Δ-automaton
    is tracked with one state vector per stack position (one entry per
    control state), updated as symbols are pushed and popped.
    """

    def __init__(self, ppda: PPDA, s: ConfigSet, stack: Sequence[Symbol]):
        self.simple = s if isinstance(s, SimpleSet) else None
        self.aut = s if isinstance(s, DeltaAutomaton) else None
        if self.aut is not None:
            self.states = ppda.states
            self.index = {p: j for j, p in enumerate(ppda.states)}
            self.trail: List[Tuple[Hashable, ...]] = [tuple(self.aut.init[p] for p in self.states)]
            for x in stack:
                self.push(x)

    def push(self, x: Symbol) -> None:
        if self.aut is not None:
            self.trail.append(tuple(self.aut.trans[a, x] for a in self.trail[-1]))

    def pop(self) -> None:
        if self.aut is not None:
            self.trail.pop()

    def holds(self, state, stack: List[Symbol]) -> bool:
        if self.simple is not None:
            return (state, stack[-1] if stack else EPS) in self.simple.base
        return self.trail[-1][self.index[state]] in self.aut.accepting


def _apply(rule: Rule, stack: List[Symbol], trackers: Sequence[_Membership]) -> None:
    stack.pop()
    for t in trackers:
        t.pop()
    for x in reversed(rule.rhs_stack):
        stack.append(x)
        for t in trackers:
            t.push(x)


def sample_run(ppda: PPDA, c: Configuration, max_steps: int, seed: int, stream: Optional[int] = None) -> RunSample:
    if max_steps < 1:
        raise ModelError(f"max_steps must be at least 1, not {max_steps}")
    check_configuration(ppda, c)
    draws = _Uniforms(generator(seed, stream))
    rules = _RuleTable(ppda)
    state, stack = c.state, list(reversed(c.stack))
    steps: List[Tuple[Configuration, Optional[int]]] = []
    for _ in range(max_steps):
        current = Configuration(state, tuple(reversed(stack)))
        choice = rules.choose(draws, current.head) if stack else None
        if choice is None:
            steps.append((current, None))
            return RunSample(seed=seed, steps=tuple(steps), terminated=True, truncated=False)
        i, rule = choice
        steps.append((current, i))
        _apply(rule, stack, ())
        state = rule.rhs_state
    final = Configuration(state, tuple(reversed(stack)))
    terminated = ppda.is_dead(final)
    steps.append((final, None))
    return RunSample(seed=seed, steps=tuple(steps), terminated=terminated, truncated=not terminated)


def _stderr(successes: int, runs: int) -> Fraction:
    if runs == 0:
        return ZERO
    p = Fraction(successes, runs)
    # sqrt rounded up onto a 1e-9 grid so no float leaves this function
    return Fraction(math.ceil(math.sqrt(p * (1 - p) / runs) * 10**9), 10**9)


def estimate_until(
    ppda: PPDA,
    c1: ConfigSet,
    c2: ConfigSet,
    c: Configuration,
    runs: int = DEFAULT_RUNS,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    oracle: Optional[Oracle] = None,
) -> Estimate:
    """
    Fraction of sampled runs that hit C2 through C1 within the horizon.
    Runs still inside C1 \\ C2 at the horizon are reported as undetermined.
    """
    check_configuration(ppda, c)
    if isinstance(c1, SimpleSet) and isinstance(c2, SimpleSet):
        if not (oracle or Oracle()).until_positive(ppda, c1, c2, c):
            return Estimate(estimate=ZERO, stderr=ZERO, undetermined=0, runs=runs)
    table = _RuleTable(ppda)
    successes = undetermined = 0
    for i in range(runs):
        draws = _Uniforms(generator(seed, i))
        state, stack = c.state, list(reversed(c.stack))
        in1, in2 = _Membership(ppda, c1, stack), _Membership(ppda, c2, stack)
        for _ in range(horizon + 1):
            if in2.holds(state, stack):
                successes += 1
                break
            if not in1.holds(state, stack):
                break
            choice = table.choose(draws, Head(state, stack[-1])) if stack else None
            if choice is None:
                break
            _apply(choice[1], stack, (in1, in2))
            state = choice[1].rhs_state
        else:
            undetermined += 1
    logger.debug("until estimate: %d/%d hits, %d undetermined", successes, runs, undetermined)
    return Estimate(
        estimate=Fraction(successes, runs) if runs else ZERO,
        stderr=_stderr(successes, runs),
        undetermined=undetermined,
        runs=runs,
    )


def estimate_acceptance(
    ppda: PPDA,
    obs: HeadAutomaton,
    head: Head,
    runs: int = DEFAULT_RUNS,
    horizon: int = DEFAULT_HORIZON,
    seed: int = 0,
    chain: Optional[MinChain] = None,
    oracle: Optional[Oracle] = None,
) -> AcceptanceEstimate:
    """
    Fraction of runs from `head` whose certified footprint has entered an
    accepting bottom component of the chain within the horizon. A footprint
    that has not reached any bottom component leaves the run undetermined.
    """
    check_configuration(ppda, Configuration(head.state, (head.symbol,)))
    obs.check_total(ppda)
    if chain is None:
        chain = ChainBuilder(ppda, obs, oracle=oracle).build([head])
    classification = bsccs(chain, obs)
    if not classification.accepting:
        return AcceptanceEstimate(estimate=ZERO, stderr=ZERO, undetermined=0, runs=runs)
    component = {s: comp for comp in classification.components for s in comp}
    accepting = classification.targets
    certifier = DropCertifier(ppda)
    table = _RuleTable(ppda)
    successes = undetermined = unsupported = 0
    for i in range(runs):
        draws = _Uniforms(generator(seed, i))
        state, stack = head.state, [head.symbol]
        heads: List[Optional[Head]] = [head]
        lengths = [1]
        terminated = False
        for _ in range(horizon):
            choice = table.choose(draws, Head(state, stack[-1])) if stack else None
            if choice is None:
                terminated = True
                break
            _apply(choice[1], stack, ())
            state = choice[1].rhs_state
            heads.append(Head(state, stack[-1]) if stack else None)
            lengths.append(len(stack))
        else:
            terminated = ppda.is_dead(Configuration(state, tuple(reversed(stack))))
        last = Configuration(state, tuple(reversed(stack)))
        trail = footprint_of(heads, lengths, last, obs, terminated, None if terminated else certifier)
        unsupported += sum(1 for s, t in zip(trail, trail[1:]) if not chain.has_edge(s, t))
        final = trail[-1]
        if final is BOTTOM or final in component:
            successes += final in accepting
        else:
            undetermined += 1
    if unsupported:
        logger.warning("%d sampled footprint transitions are not chain edges", unsupported)
    return AcceptanceEstimate(
        estimate=Fraction(successes, runs) if runs else ZERO,
        stderr=_stderr(successes, runs),
        undetermined=undetermined,
        runs=runs,
        unsupported=unsupported,
    )
