"""
Runtime settings read from the environment (and a .env file, if present).
"""

import importlib.util
import math
import os
import shlex
import shutil
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict

from .constants import (
    DEFAULT_WIDTH,
    MAX_ITERATIONS,
    MAX_REFINEMENTS,
    RUNNER_COMMAND,
    SOLVER_TIMEOUT,
    Z3_COMMAND,
)

RUNNER_PATH = Path(__file__).with_name("smt_runner.py")


def default_solver_cmd(timeout: float = SOLVER_TIMEOUT) -> Optional[str]:
    """
    z3 on PATH, else the bundled runner when the z3 bindings import, else
    None. The solver's own time limit is the timeout in whole seconds.
    """
    tlimit = max(1, math.ceil(timeout))
    if shutil.which("z3"):
        return Z3_COMMAND.format(tlimit=tlimit)
    if importlib.util.find_spec("z3") is not None:
        return RUNNER_COMMAND.format(
            python=shlex.quote(sys.executable), runner=shlex.quote(str(RUNNER_PATH)), tlimit=tlimit
        )
    return None


def _flag(name: str, default: str = "false") -> bool:
    return os.getenv(name, default).lower() in ("1", "true", "yes")


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    solver_cmd: Optional[str] = None
    backend: str = "auto"
    solver_timeout: float = SOLVER_TIMEOUT
    width: Fraction = DEFAULT_WIDTH
    max_iterations: int = MAX_ITERATIONS
    max_refinements: int = MAX_REFINEMENTS
    logging_enabled: bool = False
    log_dir: str = "logs"

    @classmethod
    def from_env(cls, **overrides) -> "Settings":
        load_dotenv()
        timeout = float(os.getenv("PPDA_SOLVER_TIMEOUT", SOLVER_TIMEOUT))
        values = dict(
            solver_cmd=os.getenv("PPDA_SOLVER_CMD") or default_solver_cmd(timeout),
            backend=os.getenv("PPDA_BACKEND", "auto"),
            solver_timeout=timeout,
            width=Fraction(os.getenv("PPDA_WIDTH", str(DEFAULT_WIDTH))),
            max_iterations=int(os.getenv("PPDA_MAX_ITERATIONS", MAX_ITERATIONS)),
            max_refinements=int(os.getenv("PPDA_MAX_REFINEMENTS", MAX_REFINEMENTS)),
            logging_enabled=_flag("PPDA_LOGGING_ENABLED"),
            log_dir=os.getenv("PPDA_LOG_DIR", "logs"),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
