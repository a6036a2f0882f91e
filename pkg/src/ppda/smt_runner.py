#! /usr/bin/env python3
"""
Runs an SMT-LIB2 script through the z3 Python bindings and prints the
solver's responses, like `z3 -smt2 FILE`. Used as the default external
solver when no z3 binary is on PATH.

    python smt_runner.py [--tlimit SECONDS] [FILE]    (no FILE: read stdin)
"""

import argparse
import sys

import z3

parser = argparse.ArgumentParser()
parser.add_argument("script", nargs="?", help="SMT-LIB2 file; stdin when omitted")
parser.add_argument("--tlimit", help="time limit in seconds", type=int, default=0)


def run(text: str) -> str:
    cfg = z3.Z3_mk_config()
    ctx = z3.Z3_mk_context(cfg)
    return z3.Z3_eval_smtlib2_string(ctx, text)


if __name__ == "__main__":
    args = parser.parse_args()
    if args.tlimit:
        z3.set_param("timeout", args.tlimit * 1000)
    if args.script:
        with open(args.script) as f:
            text = f.read()
    else:
        text = sys.stdin.read()
    try:
        out = run(text)
    except z3.Z3Exception as e:
        print(f"(error \"{e}\")", flush=True)
        sys.exit(1)
    print(out.strip(), flush=True)
