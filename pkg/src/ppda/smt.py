"""
SMT-LIB2 export of decision queries over the least solution of an
equation system, and the client that runs an external solver on them.

A monotone query "μ-expr ~ b" is decided with post-fixed points only:
every x in [0,1]^n with F(x) <= x lies above μ, and μ is one of them, so

    μ-expr <  b   iff  sat(F(x) <= x, expr(x) <  b)
    μ-expr <= b   iff  sat(F(x) <= x, expr(x) <= b)
    μ-expr >= b   iff  unsat(F(x) <= x, expr(x) <  b)
    μ-expr >  b   iff  unsat(F(x) <= x, expr(x) <= b)

and "=" is the conjunction of "<=" and ">=". Queries that are not monotone
pin x to the least fixed point with a universally quantified side
condition instead.
"""

import logging
import os
import shlex
import subprocess
import tempfile
from fractions import Fraction
from typing import TYPE_CHECKING, List, NamedTuple, Optional, Sequence, Tuple

from .constants import SOLVER_GRACE
from .equations import MonotoneSystem, Polynomial, VarId
from .errors import SolverError
from .settings import Settings

if TYPE_CHECKING:
    from .solver import DecisionQuery

logger = logging.getLogger(__name__)

_SMT_REL = {"<": "<", "<=": "<=", "=": "=", ">=": ">=", ">": ">"}


def number(c: Fraction) -> str:
    c = Fraction(c)
    if c < 0:
        return f"(- {number(-c)})"
    if c.denominator == 1:
        return f"{c.numerator}.0"
    return f"(/ {c.numerator}.0 {c.denominator}.0)"


def symbol(v: VarId, prefix: str = "") -> str:
    return "|" + prefix + str(v).replace("•", "bullet").replace("|", "!").replace("\\", "/") + "|"


def term(p: Polynomial, prefix: str = "") -> str:
    parts = []
    for mono, c in p.sorted_terms():
        factors = [symbol(v, prefix) for v in mono]
        if c != 1 or not factors:
            factors.insert(0, number(c))
        parts.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    if not parts:
        return "0.0"
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def declare_system(sys: MonotoneSystem, prefix: str = "", post_fixed: bool = True) -> List[str]:
    """Declarations, range constraints and F(x) <= x (or F(x) = x) for every free variable."""
    lines = [f"; {len(sys.vars)} free variables, {len(sys.pinned)} pinned"]
    for v in sys.vars:
        lines.append(f"(declare-const {symbol(v, prefix)} Real)")
    for v in sys.vars:
        x = symbol(v, prefix)
        rel = "<=" if post_fixed else "="
        lines.append(f"(assert (and (<= 0.0 {x}) (<= {x} 1.0) ({rel} {term(sys.rhs[v], prefix)} {x})))")
    return lines


def least_solution_constraint(sys: MonotoneSystem, prefix: str = "", bound: str = "y!") -> str:
    """x lies below every post-fixed point in [0,1]^n; together with F(x) = x, x is the least solution."""
    if not sys.vars:
        return "true"
    ys = [symbol(v, bound + prefix) for v in sys.vars]
    binders = " ".join(f"({y} Real)" for y in ys)
    premise = " ".join(
        f"(<= 0.0 {y}) (<= {y} 1.0) (<= {term(sys.rhs[v], bound + prefix)} {y})"
        for v, y in zip(sys.vars, ys)
    )
    conclusion = " ".join(f"(<= {symbol(v, prefix)} {y})" for v, y in zip(sys.vars, ys))
    return f"(forall ({binders}) (=> (and {premise}) (and {conclusion})))"


class SmtScript(NamedTuple):
    text: str
    # for each (check-sat): the verdict a `sat` answer means
    sat_means: Tuple[bool, ...]

    def verdict(self, answers: Sequence[str]) -> Optional[bool]:
        """Combines per-check answers; None when undetermined."""
        results = []
        for means, answer in zip(self.sat_means, answers):
            if answer == "sat":
                results.append(means)
            elif answer == "unsat":
                results.append(not means)
            else:
                results.append(None)
        if len(results) < len(self.sat_means):
            results.append(None)
        if any(r is False for r in results):
            return False
        if all(r is True for r in results):
            return True
        return None


def _comment(q: "DecisionQuery") -> str:
    return "; query: " + str(q).replace("•", "bullet")


def _check(assertion: str) -> List[str]:
    return ["(push 1)", f"(assert {assertion})", "(check-sat)", "(pop 1)"]


def query_script(q: "DecisionQuery") -> SmtScript:
    form = q.monotone_form()
    if form is None:
        return general_script(q)
    expr, rel, bound = form
    e, b = term(expr), number(bound)
    lines = [_comment(q), "(set-logic QF_NRA)"] + declare_system(q.system)
    if rel in ("<", "<="):
        lines += _check(f"({rel} {e} {b})")
        means: Tuple[bool, ...] = (True,)
    elif rel == ">=":
        lines += _check(f"(< {e} {b})")
        means = (False,)
    elif rel == ">":
        lines += _check(f"(<= {e} {b})")
        means = (False,)
    else:
        lines += _check(f"(<= {e} {b})") + _check(f"(< {e} {b})")
        means = (True, False)
    lines.append("(exit)")
    return SmtScript("\n".join(lines) + "\n", means)


def general_script(q: "DecisionQuery") -> SmtScript:
    sys = q.system
    lines = [_comment(q), "(set-logic NRA)"]
    lines += declare_system(sys, post_fixed=False)
    lines.append(f"(assert {least_solution_constraint(sys)})")
    lhs, rhs = q.sides()
    lines += _check(f"({_SMT_REL[q.rel.value]} {term(lhs)} {term(rhs)})")
    lines.append("(exit)")
    return SmtScript("\n".join(lines) + "\n", (True,))


def export_smt(q: "DecisionQuery") -> str:
    return query_script(q).text


def parse_answers(output: str) -> List[str]:
    answers = []
    for line in output.splitlines():
        line = line.strip()
        if line in ("sat", "unsat", "unknown", "timeout"):
            answers.append("unknown" if line == "timeout" else line)
        elif line.startswith("(error"):
            raise SolverError(f"solver reported {line}")
    return answers


def run_solver(script: SmtScript, settings: Settings) -> Optional[List[str]]:
    """
    Runs the configured solver command on the script. `{}` in the command
    is replaced by the path of a temporary file holding the script;
    without it the script is written to standard input. Returns None when
    the solver reports a timeout or outlives its limit by SOLVER_GRACE.
    """
    if not settings.solver_cmd:
        raise SolverError("no external solver configured (set PPDA_SOLVER_CMD or install z3-solver)")
    path = None
    try:
        if "{}" in settings.solver_cmd:
            fd, path = tempfile.mkstemp(suffix=".smt2", prefix="ppda-")
            with os.fdopen(fd, "w") as f:
                f.write(script.text)
            argv = shlex.split(settings.solver_cmd.replace("{}", shlex.quote(path)))
            stdin = None
        else:
            argv = shlex.split(settings.solver_cmd)
            stdin = script.text
        logger.debug("running solver: %s", " ".join(argv))
        try:
            p = subprocess.run(
                argv,
                input=stdin,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                timeout=settings.solver_timeout + SOLVER_GRACE,
                check=False,
                text=True,
            )
        except subprocess.TimeoutExpired:
            logger.warning("solver timed out after %ss", settings.solver_timeout)
            return None
        except OSError as e:
            raise SolverError(f"cannot start solver {argv[0]!r}: {e}") from e
        if any(line.strip() == "timeout" for line in p.stdout.splitlines()):
            logger.warning("solver reported a timeout")
            return None
        answers = parse_answers(p.stdout)
        if len(answers) < len(script.sat_means):
            raise SolverError(
                f"solver exited with {p.returncode} after {len(answers)} answers: {(p.stderr or p.stdout).strip()[:200]}"
            )
        return answers
    finally:
        if path is not None:
            os.unlink(path)
