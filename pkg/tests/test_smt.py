from fractions import Fraction

import pytest

from src.ppda import settings as settings_module
from src.ppda import smt
from src.ppda.equations import BULLET, Polynomial, VarId, build_until_system
from src.ppda.errors import SolverError
from src.ppda.model import Head
from src.ppda.regsets import SimpleSet
from src.ppda.settings import Settings
from src.ppda.solver import DecisionQuery, Rel
from tests.systems import make_walk

I_POP = VarId(Head("p", "I"), "p")
D_POP = VarId(Head("p", "D"), "p")


@pytest.fixture
def system():
    ppda = make_walk(Fraction(2, 3))
    return build_until_system(ppda, SimpleSet.everything(ppda), SimpleSet.empty_stack(ppda))


def query(system, rel, bound=Fraction(1, 2)):
    return DecisionQuery(system, Polynomial.var(I_POP), Rel(rel), Fraction(bound))


def test_numbers_and_symbols():
    assert smt.number(Fraction(1)) == "1.0"
    assert smt.number(Fraction(1, 2)) == "(/ 1.0 2.0)"
    assert smt.number(Fraction(-1, 2)) == "(- (/ 1.0 2.0))"
    assert smt.symbol(VarId(Head("p", "I"), BULLET)) == "|<p,I,bullet>|"
    assert smt.term(Polynomial()) == "0.0"
    p = Polynomial.constant(Fraction(1, 3)) + Polynomial({(I_POP, I_POP): Fraction(2, 3)})
    assert smt.term(p) == "(+ (/ 1.0 3.0) (* (/ 2.0 3.0) |<p,I,p>| |<p,I,p>|))"


def test_system_is_declared_as_post_fixed(system):
    lines = smt.declare_system(system)
    assert lines[0].startswith("; 6 free variables, 0 pinned")
    assert "(declare-const |<p,I,p>| Real)" in lines
    assert any(line.startswith("(assert (and (<= 0.0 |<p,I,p>|)") and "(<= (+ " in line for line in lines)


@pytest.mark.parametrize(
    "rel, checks, sat_means",
    [
        ("<", ["(< |<p,I,p>| (/ 1.0 2.0))"], (True,)),
        ("<=", ["(<= |<p,I,p>| (/ 1.0 2.0))"], (True,)),
        (">=", ["(< |<p,I,p>| (/ 1.0 2.0))"], (False,)),
        (">", ["(<= |<p,I,p>| (/ 1.0 2.0))"], (False,)),
        ("=", ["(<= |<p,I,p>| (/ 1.0 2.0))", "(< |<p,I,p>| (/ 1.0 2.0))"], (True, False)),
    ],
)
def test_monotone_queries_use_post_fixed_points(system, rel, checks, sat_means):
    script = smt.query_script(query(system, rel))
    assert script.sat_means == sat_means
    assert "(set-logic QF_NRA)" in script.text
    assert "forall" not in script.text
    asserted = [line[len("(assert "):-1] for line in script.text.splitlines() if line.startswith("(assert (")]
    assert asserted[-len(checks):] == checks
    assert script.text.count("(check-sat)") == len(checks)
    assert script.text.endswith("(exit)\n")


def test_non_monotone_queries_pin_the_least_solution(system):
    q = DecisionQuery(system, Polynomial.var(I_POP), Rel.LT, rhs=Polynomial.var(D_POP))
    assert q.monotone_form() is None
    script = smt.query_script(q)
    assert "(set-logic NRA)" in script.text
    assert "(forall (" in script.text
    assert "(< |<p,I,p>| |<p,D,p>|)" in script.text
    assert script.sat_means == (True,)


def test_verdict_combines_answers():
    eq = smt.SmtScript("", (True, False))
    assert eq.verdict(["sat", "unsat"]) is True
    assert eq.verdict(["sat", "sat"]) is False
    assert eq.verdict(["unsat", "unknown"]) is False
    assert eq.verdict(["sat", "unknown"]) is None
    assert eq.verdict(["sat"]) is None


def test_parse_answers():
    assert smt.parse_answers("sat\n  unsat\nsomething\ntimeout\n") == ["sat", "unsat", "unknown"]
    with pytest.raises(SolverError):
        smt.parse_answers('sat\n(error "line 3: unknown constant")\n')


def test_run_solver_requires_a_command(system):
    with pytest.raises(SolverError):
        smt.run_solver(smt.query_script(query(system, "<")), Settings(solver_cmd=None))


def test_run_solver_reads_answers_from_stdout(system):
    script = smt.query_script(query(system, ">="))
    answers = smt.run_solver(script, Settings(solver_cmd="sh -c 'cat >/dev/null; echo unsat'"))
    assert answers == ["unsat"]
    assert script.verdict(answers) is True


def test_run_solver_reports_solver_timeouts(system):
    script = smt.query_script(query(system, "="))
    assert smt.run_solver(script, Settings(solver_cmd="sh -c 'cat >/dev/null; echo timeout'")) is None


def test_default_command_carries_the_time_limit(monkeypatch):
    monkeypatch.setattr(settings_module.shutil, "which", lambda name: "/usr/bin/z3")
    assert settings_module.default_solver_cmd(7.5) == "z3 -smt2 -T:8 {}"
    monkeypatch.setattr(settings_module.shutil, "which", lambda name: None)
    monkeypatch.setattr(settings_module.importlib.util, "find_spec", lambda name: object())
    command = settings_module.default_solver_cmd(30)
    assert command.endswith("smt_runner.py --tlimit 30 {}")
    monkeypatch.setattr(settings_module.importlib.util, "find_spec", lambda name: None)
    assert settings_module.default_solver_cmd() is None


def test_run_solver_rejects_missing_answers(system):
    with pytest.raises(SolverError):
        smt.run_solver(smt.query_script(query(system, "<")), Settings(solver_cmd="cat {}"))
    with pytest.raises(SolverError):
        smt.run_solver(smt.query_script(query(system, "<")), Settings(solver_cmd="no-such-solver-binary"))


@pytest.mark.solver
@pytest.mark.parametrize("rel, expected", [("<=", True), (">=", True), ("<", False), ("=", True)])
def test_external_solver_decides_threshold(system, solver_settings, rel, expected):
    script = smt.query_script(query(system, rel))
    assert script.verdict(smt.run_solver(script, solver_settings)) is expected
