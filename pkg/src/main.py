# python -m src.main until data/walk_2_3.ppda --c1 all --c2 "{Z}" --config IIZ --width 1/100
import argparse
import logging
import os
import re
import sys
import uuid
from datetime import datetime
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Literal, Optional, Tuple

from pydantic import BaseModel, ValidationError, model_validator

from src.ppda.constants import DEFAULT_HORIZON, DEFAULT_RUNS
from src.ppda.equations import BULLET, VarId
from src.ppda.errors import ModelError, OracleUnknown, ParseError, PPDAError
from src.ppda.mc import analyse_acceptance, bsccs, compare_acceptance, export_acceptance_smt, muller_report
from src.ppda.model import PPDA, Configuration, Head, normalize, parse_ppda, validate
from src.ppda.omega import ChainBuilder, MullerAutomaton, parse_head_automata, union_observer
from src.ppda.pbpa import check_error_tolerant
from src.ppda.pctl import check_qualitative, parse_formula, parse_valuation
from src.ppda.regsets import SimpleSet, parse_automata, reduce_to_simple
from src.ppda.runlog import dumps, persist_log
from src.ppda.settings import Settings
from src.ppda.setexpr import as_automaton, parse_configuration, parse_head, parse_set
from src.ppda.sim import estimate_acceptance, estimate_until
from src.ppda.smt import query_script, run_solver
from src.ppda.solver import Backend, DecisionQuery, Oracle, Rel, Verdict

logger = logging.getLogger("ppda")

Command = Literal[
    "validate", "until", "irun", "pctl", "pctl-approx", "omega", "chain", "export-smt", "simulate"
]

# command -> (required inputs, required options)
REQUIREMENTS: Dict[str, tuple] = {
    "validate": ({"model"}, set()),
    "until": ({"model"}, {"c1", "c2", "config"}),
    "irun": ({"model"}, {"head"}),
    "pctl": ({"model", "valuation"}, {"formula", "config"}),
    "pctl-approx": ({"model", "valuation"}, {"formula", "config", "lambda"}),
    "omega": ({"model", "observers"}, {"name"}),
    "chain": ({"model", "observers"}, {"name", "head"}),
    "export-smt": ({"model"}, set()),
    "simulate": ({"model"}, set()),
}

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2

THRESHOLD = re.compile(r"^\s*(<=|>=|<|>|=)\s*(\S+)\s*$")


def parse_threshold(text: str) -> Tuple[Rel, Fraction]:
    """`rel bound`, e.g. `>= 1/2` or `<0.1`."""
    m = THRESHOLD.match(str(text))
    if not m:
        raise ModelError(f"threshold {text!r} is not 'REL BOUND'")
    try:
        bound = Fraction(m.group(2))
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"bad bound {m.group(2)!r} in threshold") from None
    if not 0 <= bound <= 1:
        raise ModelError(f"threshold bound {bound} lies outside [0,1]")
    return Rel.parse(m.group(1)), bound


class JobSpec(BaseModel):
    command: Command
    inputs: Dict[str, str]
    options: Dict[str, Any] = {}
    run_id: Optional[str] = None

    @model_validator(mode="after")
    def check_options(self) -> "JobSpec":
        inputs, options = REQUIREMENTS[self.command]
        given = {k for k, v in self.options.items() if v is not None}
        missing = sorted(inputs - set(self.inputs)) + sorted(f"--{o}" for o in options - given)
        if missing:
            raise ValueError(f"{self.command} needs {', '.join(missing)}")
        if "name" in given and "observers" not in self.inputs:
            raise ValueError("--name needs an --observers file")
        if self.command == "omega" and not given & {"config", "head"}:
            raise ValueError("omega needs --config or --head")
        if self.command == "simulate":
            if "name" in given and "head" not in given:
                raise ValueError("simulate --name needs --head")
            if "name" not in given and not {"c2", "config"} <= given:
                raise ValueError("simulate needs --c2 and --config (until) or --name and --head (acceptance)")
        if self.command == "export-smt":
            modes = [
                "query" in given,
                {"config", "c2", "rel", "bound"} <= given and "name" not in given,
                {"name", "head", "rel", "bound"} <= given,
            ]
            if sum(modes) != 1:
                raise ValueError("export-smt needs one of --query, --c2/--config/--rel/--bound or --name/--head/--rel/--bound")
        for key in ("width", "lambda"):
            if key in given and not 0 < Fraction(str(self.options[key])) < 1:
                raise ValueError(f"--{key} must lie in (0,1)")
        if "bound" in given:
            Fraction(str(self.options["bound"]))
        try:
            if "rel" in given:
                Rel.parse(str(self.options["rel"]))
            if "threshold" in given:
                parse_threshold(self.options["threshold"])
        except ModelError as e:
            raise ValueError(str(e)) from None
        return self


class JobResult(BaseModel):
    run_id: str
    command: str
    status: Literal["ok", "input_error", "internal_error"]
    exit_code: int
    result: Dict[str, Any] = {}
    provenance: Dict[str, Any] = {}
    summary: str = ""
    error: Optional[str] = None
    timestamp: datetime = None


def _read(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise ModelError(f"cannot read {path}: {e.strerror}") from e


class _Job:
    """Lazily loaded inputs of one job."""

    def __init__(self, spec: JobSpec, settings: Settings):
        self.spec = spec
        self.opts = {k: v for k, v in spec.options.items() if v is not None}
        self.settings = settings
        self.oracle = Oracle(settings)

    @cached_property
    def raw(self) -> PPDA:
        return parse_ppda(_read(self.spec.inputs["model"]))

    @cached_property
    def ppda(self) -> PPDA:
        return normalize(self.raw)

    @cached_property
    def automata(self):
        if "automata" not in self.spec.inputs:
            return {}
        return parse_automata(_read(self.spec.inputs["automata"]), self.ppda)

    @cached_property
    def observers(self):
        return parse_head_automata(_read(self.spec.inputs["observers"]), self.ppda)

    def fraction(self, key: str, default=None) -> Optional[Fraction]:
        value = self.opts.get(key, default)
        return None if value is None else Fraction(str(value))

    @property
    def width(self) -> Fraction:
        return self.fraction("width") or self.settings.width

    def set(self, key: str):
        return parse_set(str(self.opts[key]), self.ppda, self.automata)

    def configuration(self) -> Configuration:
        return parse_configuration(str(self.opts["config"]), self.ppda)

    def head(self) -> Head:
        return parse_head(str(self.opts["head"]), self.ppda)

    def start(self):
        return self.configuration() if "config" in self.opts else self.head()

    def observer(self):
        name = self.opts["name"]
        if name not in self.observers:
            raise ModelError(f"no observer or Muller automaton named {name!r}")
        return self.observers[name]

    def simple_until(self):
        """C1, C2 and the start configuration, reduced to simple sets when needed."""
        c1 = self.set("c1") if "c1" in self.opts else SimpleSet.everything(self.ppda)
        c2, c = self.set("c2"), self.configuration()
        if isinstance(c1, SimpleSet) and isinstance(c2, SimpleSet):
            return self.ppda, c1, c2, c
        red = reduce_to_simple(self.ppda, [as_automaton(c1, self.ppda), as_automaton(c2, self.ppda)])
        return red.product, red.simple_images[0], red.simple_images[1], red.embed(c)


# --- commands ------------------------------------------------------------------

def _validate(job: _Job) -> Dict[str, Any]:
    report = validate(job.raw)
    if not report.ok:
        raise ModelError("probabilities of " + ", ".join(f"{v.head} sum to {v.total}" for v in report.violations))
    return {"valid": True, **report.model_dump(), "fresh_symbols": len(job.ppda.alphabet) - len(job.raw.alphabet)}


def _until(job: _Job) -> Dict[str, Any]:
    ppda, c1, c2, c = job.simple_until()
    result: Dict[str, Any] = {
        "configuration": job.opts["config"],
        "probability": job.oracle.until_probability(ppda, c1, c2, c, job.width),
        "positive": job.oracle.until_positive(ppda, c1, c2, c),
    }
    if "rel" in job.opts:
        answer = job.oracle.compare_until(ppda, c1, c2, c, Rel.parse(job.opts["rel"]), job.fraction("bound", 0))
        result["verdict"] = answer.verdict
        result["backend"] = answer.backend
    if "lambda" in job.opts:
        if len(c.stack) != 1:
            raise ModelError("bisection needs a configuration with one stack symbol")
        result["bisection"] = job.oracle.bisect_bounds(ppda, c1, c2, c.head, job.fraction("lambda"))
    return result


def _irun(job: _Job) -> Dict[str, Any]:
    head = job.head()
    try:
        positive = Verdict.of(job.oracle.irun_positive(job.ppda, head))
    except OracleUnknown:
        positive = Verdict.UNKNOWN
    return {"head": str(head), "probability": job.oracle.irun_probability(job.ppda, head, job.width), "positive": positive}


def _pctl(job: _Job) -> Dict[str, Any]:
    nu = parse_valuation(_read(job.spec.inputs["valuation"]), job.ppda)
    phi = parse_formula(str(job.opts["formula"]))
    c = job.configuration()
    try:
        verdict = Verdict.of(c in check_qualitative(job.ppda, phi, nu, job.oracle))
        undecided = None
    except OracleUnknown as e:
        verdict, undecided = Verdict.UNKNOWN, e.predicate
    return {"formula": str(phi), "configuration": str(c), "verdict": verdict, "undecided": undecided}


def _pctl_approx(job: _Job) -> Dict[str, Any]:
    nu = parse_valuation(_read(job.spec.inputs["valuation"]), job.ppda)
    phi = parse_formula(str(job.opts["formula"]))
    try:
        verdict = check_error_tolerant(job.ppda, phi, nu, job.configuration(), job.fraction("lambda"), job.oracle)
    except OracleUnknown as e:
        return {"formula": str(phi), "answer": Verdict.UNKNOWN, "undecided": e.predicate}
    return verdict.model_dump()


def _omega(job: _Job) -> Dict[str, Any]:
    aut, start = job.observer(), job.start()
    if isinstance(aut, MullerAutomaton):
        report = muller_report(job.ppda, aut, start, job.width, job.oracle)
    else:
        report = analyse_acceptance(job.ppda, aut, start, job.width, job.oracle)
    result: Dict[str, Any] = {
        "head": report.head,
        "probability": report.probability,
        "bsccs": report.bsccs.to_json(),
        "chain_states": report.chain_states,
        "width_reached": report.width_reached,
    }
    if "threshold" in job.opts:
        rel, bound = parse_threshold(job.opts["threshold"])
        answer = compare_acceptance(job.ppda, aut, start, rel, bound, job.width, job.oracle, report)
        result["threshold"] = f"{rel.value} {bound}"
        result["verdict"] = answer.verdict
        result["backend"] = answer.backend
    return result


def _chain(job: _Job) -> Dict[str, Any]:
    aut, head = job.observer(), job.head()
    ppda = job.ppda
    if isinstance(aut, MullerAutomaton):
        ppda, aut = union_observer(ppda, aut)
        head = Head((head.state, job.observer().init), head.symbol)
    chain = ChainBuilder(ppda, aut, job.width, job.oracle).build([head])
    return {"chain": chain.to_json(), "bsccs": bsccs(chain, aut).to_json()}


def _variable_query(job: _Job) -> DecisionQuery:
    """`HEAD.TARGET REL BOUND`, e.g. `I.eps >= 1` or `p.X.q < 1/2`; TARGET is a state, eps or bullet."""
    try:
        lhs, rel, bound = str(job.opts["query"]).split()
    except ValueError:
        raise ParseError(f"query {job.opts['query']!r} is not 'HEAD.TARGET REL BOUND'") from None
    head_text, _, target_text = lhs.rpartition(".")
    head = parse_head(head_text, job.ppda)
    if target_text == "bullet":
        target = BULLET
    elif target_text == "eps" and job.ppda.is_pbpa:
        target = job.ppda.states[0]
    else:
        states = {str(p): p for p in job.ppda.states}
        if target_text not in states:
            raise ParseError(f"unknown target {target_text!r} in query")
        target = states[target_text]
    c1 = job.set("c1") if "c1" in job.opts else SimpleSet.everything(job.ppda)
    c2 = job.set("c2") if "c2" in job.opts else SimpleSet.empty_stack(job.ppda)
    sys_ = job.oracle.system(job.ppda, c1, c2)
    return DecisionQuery(sys_, sys_.variable(VarId(head, target)), Rel.parse(rel), Fraction(bound), label=lhs)


def _export_smt(job: _Job) -> Dict[str, Any]:
    if "query" in job.opts:
        script = query_script(_variable_query(job))
    elif "name" in job.opts:
        script = export_acceptance_smt(
            job.ppda, job.observer(), job.head(), Rel.parse(job.opts["rel"]), job.fraction("bound"), job.oracle
        )
    else:
        ppda, c1, c2, c = job.simple_until()
        script = query_script(job.oracle.until_query(ppda, c1, c2, c, Rel.parse(job.opts["rel"]), job.fraction("bound")))
    result: Dict[str, Any] = {"checks": len(script.sat_means)}
    if "out" in job.opts:
        with open(job.opts["out"], "w") as f:
            f.write(script.text)
        result["script"] = job.opts["out"]
    else:
        result["script_text"] = script.text
    if job.opts.get("run"):
        job.oracle.stats.external_calls += 1
        answers = run_solver(script, job.settings)
        result["answers"] = answers
        result["verdict"] = Verdict.of(None if answers is None else script.verdict(answers))
    return result


def _simulate(job: _Job) -> Dict[str, Any]:
    runs = int(job.opts.get("runs", DEFAULT_RUNS))
    horizon = int(job.opts.get("horizon", DEFAULT_HORIZON))
    seed = int(job.opts.get("seed", 0))
    if "name" in job.opts:
        estimate = estimate_acceptance(job.ppda, job.observer(), job.head(), runs, horizon, seed, oracle=job.oracle)
    else:
        c1 = job.set("c1") if "c1" in job.opts else SimpleSet.everything(job.ppda)
        estimate = estimate_until(job.ppda, c1, job.set("c2"), job.configuration(), runs, horizon, seed, job.oracle)
    return {**estimate.model_dump(), "interval": estimate.interval(), "seed": seed, "horizon": horizon}


HANDLERS = {
    "validate": _validate,
    "until": _until,
    "irun": _irun,
    "pctl": _pctl,
    "pctl-approx": _pctl_approx,
    "omega": _omega,
    "chain": _chain,
    "export-smt": _export_smt,
    "simulate": _simulate,
}


def _summary(command: str, result: Dict[str, Any]) -> str:
    for key in ("verdict", "answer", "probability", "estimate", "valid", "checks"):
        if key in result:
            return f"{command}: {key} = {dumps(result[key])}"
    return f"{command}: done"


def run_job(spec: JobSpec, settings: Optional[Settings] = None) -> JobResult:
    """Runs one job; input errors and internal failures become results, never exceptions."""
    run_id = spec.run_id or str(uuid.uuid4())
    settings = settings or Settings.from_env()
    overrides = {k: spec.options.get(k) for k in ("solver_cmd", "backend") if spec.options.get(k)}
    if spec.options.get("width"):
        overrides["width"] = Fraction(str(spec.options["width"]))
    if overrides:
        settings = settings.model_copy(update=overrides)
    persist_log(run_id, {"type": "request", **spec.model_dump()}, settings)

    job = _Job(spec, settings)
    try:
        result = HANDLERS[spec.command](job)
        status, code, error = "ok", EXIT_OK, None
    except (ParseError, ModelError) as e:
        result, status, code, error = {}, "input_error", EXIT_INPUT, str(e)
    except PPDAError as e:
        result, status, code, error = {}, "internal_error", EXIT_INTERNAL, str(e)
    except Exception as e:
        logger.debug("internal failure in %s", spec.command, exc_info=True)
        result, status, code, error = {}, "internal_error", EXIT_INTERNAL, f"{type(e).__name__}: {e}"

    job_result = JobResult(
        run_id=run_id,
        command=spec.command,
        status=status,
        exit_code=code,
        result=result,
        provenance={"backend": settings.backend, **job.oracle.stats.model_dump()},
        summary=_summary(spec.command, result) if error is None else error,
        error=error,
        timestamp=datetime.now(),
    )
    persist_log(run_id, {"type": "result", **job_result.model_dump()}, settings)
    return job_result


# --- argparse front end ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ppda", description="Model checking of probabilistic pushdown automata")
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG on stderr")
    parser.add_argument("--solver-cmd", help="external solver command; {} is the script path")
    parser.add_argument("--backend", choices=[b.value for b in Backend])
    parser.add_argument("--width", help="interval width, e.g. 1/1000")
    parser.add_argument("--output", "-o", help="write the JSON result here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, help: str, *inputs: str):
        p = sub.add_parser(name, help=help)
        p.add_argument("model", help="system description file")
        for flag in inputs:
            aliases = ("--observer", "--muller") if flag == "observers" else ()
            p.add_argument(f"--{flag}", *aliases, dest=flag, required=flag != "automata", help=f"{flag} file")
        if "automata" not in inputs and name not in ("validate", "irun"):
            p.add_argument("--automata", help="Δ-automata file for named sets")
        return p

    command("validate", "parse and check a system")

    p = command("until", "bracket P(c, C1 U C2)")
    p.add_argument("--c1", required=True)
    p.add_argument("--c2", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--rel", help="also decide P ~ bound")
    p.add_argument("--bound")
    p.add_argument("--lambda", dest="lambda_", help="bisect the value to this precision")

    p = command("irun", "probability of the infinite runs from a head")
    p.add_argument("--head", required=True)

    for name, help in (("pctl", "qualitative PCTL"), ("pctl-approx", "error-tolerant PCTL on pBPA")):
        p = command(name, help, "valuation")
        p.add_argument("--formula", required=True)
        p.add_argument("--config", required=True)
        if name == "pctl-approx":
            p.add_argument("--lambda", dest="lambda_", required=True)

    p = command("omega", "probability of an observer or Muller property", "observers")
    p.add_argument("--name", required=True)
    p.add_argument("--config")
    p.add_argument("--head")
    p.add_argument("--threshold", help="also decide P ~ bound, e.g. '>= 1/2'")

    p = command("chain", "dump the minima chain", "observers")
    p.add_argument("--name", required=True)
    p.add_argument("--head", required=True)

    p = command("export-smt", "write an SMT-LIB2 script for one query")
    p.add_argument("--query", help="HEAD.TARGET REL BOUND, e.g. 'I.eps >= 1'")
    p.add_argument("--c1")
    p.add_argument("--c2")
    p.add_argument("--config")
    p.add_argument("--head")
    p.add_argument("--rel")
    p.add_argument("--bound")
    p.add_argument("--observers")
    p.add_argument("--name")
    p.add_argument("--out")
    p.add_argument("--run", action="store_true", help="also run the configured solver")

    p = command("simulate", "Monte Carlo estimate of an until or acceptance probability")
    p.add_argument("--c1")
    p.add_argument("--c2")
    p.add_argument("--config")
    p.add_argument("--head")
    p.add_argument("--observers")
    p.add_argument("--name")
    p.add_argument("--runs", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    return parser


INPUT_KEYS = ("model", "automata", "valuation", "observers")


def spec_from_args(args: argparse.Namespace) -> JobSpec:
    values = vars(args)
    inputs = {k: values[k] for k in INPUT_KEYS if values.get(k)}
    options = {
        ("lambda" if k == "lambda_" else k): v
        for k, v in values.items()
        if k not in INPUT_KEYS + ("command", "verbose", "output") and v is not None
    }
    return JobSpec(command=args.command, inputs=inputs, options=options)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = spec_from_args(args)
    except ValidationError as e:
        print(f"❌ invalid options: {e.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_INPUT

    result = run_job(spec)
    text = dumps(result.model_dump(), indent=2)
    if args.output:
        os.makedirs(os.path.dirname(os.path.abspath(args.output)), exist_ok=True)
        with open(args.output, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    marker = "✅" if result.exit_code == EXIT_OK else "❌"
    print(f"{marker} {result.summary}", file=sys.stderr)
    for warning in result.provenance.get("warnings", []):
        print(f"⚠️  {warning}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
