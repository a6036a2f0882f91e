import os

import hypothesis
import pytest

from src.ppda.settings import Settings, default_solver_cmd
from src.ppda.solver import Oracle
from tests.systems import WALK_XS, load_walk

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile(
    "ci", max_examples=200, deadline=None, suppress_health_check=[hypothesis.HealthCheck.too_slow]
)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

SOLVER_CMD = default_solver_cmd()


def pytest_collection_modifyitems(config, items):
    if SOLVER_CMD is not None:
        return
    skip = pytest.mark.skip(reason="no z3 binary or z3-solver bindings available")
    for item in items:
        if "solver" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def interval_settings():
    """Intervals only: every answer must come from certified brackets."""
    return Settings(solver_cmd=None, backend="intervals")


@pytest.fixture
def solver_settings():
    return Settings(solver_cmd=SOLVER_CMD, backend="auto")


@pytest.fixture
def interval_oracle(interval_settings):
    return Oracle(interval_settings)


@pytest.fixture
def oracle(solver_settings):
    return Oracle(solver_settings)


@pytest.fixture(params=WALK_XS, ids=lambda x: f"x={x}")
def walk_x(request):
    return request.param


@pytest.fixture
def walk(walk_x):
    return load_walk(walk_x)


@pytest.fixture
def mc_runs():
    """Sample size of the Monte Carlo checks; PPDA_MC_RUNS=100000 for the full-size runs."""
    return int(os.getenv("PPDA_MC_RUNS", "2000"))
