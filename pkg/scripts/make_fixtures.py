#!/usr/bin/env python3
"""
Script to (re)generate the example inputs in data/: the Bernoulli walk
as a pBPA for a given x, its head observer, the Muller automaton for
"head Z infinitely often" and a valuation with the atZ proposition.
"""

import argparse
import os
import sys
from fractions import Fraction
from typing import List

# Constants
DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")
DEFAULT_XS = ["1/3", "1/2", "2/3", "3/4"]


def walk_text(x: Fraction) -> str:
    """Z -x-> IZ, Z -(1-x)-> DZ, I -x-> II, I -(1-x)-> eps, D -(1-x)-> DD, D -x-> eps."""
    y = 1 - x
    return (
        f"# Bernoulli walk, x = {x}\n"
        "pbpa\n"
        "alphabet Z I D;\n"
        f"Z -> {x} I Z;\n"
        f"Z -> {y} D Z;\n"
        f"I -> {x} I I;\n"
        f"I -> {y} eps;\n"
        f"D -> {y} D D;\n"
        f"D -> {x} eps;\n"
    )


def walk_file(x: Fraction) -> str:
    return f"walk_{x.numerator}_{x.denominator}.ppda"


OBSERVERS = """\
# a0 until the first jump that shows head Z, a1 from then on
observer zseen
  states a0 a1;
  init a0;
  trans a0 Z -> a1;
  trans a0 * -> a0;
  trans a1 * -> a1;
  acceptance {a1};

# b1 exactly after a head Z: a run is accepted iff Z is on top infinitely often
muller zinf
  states b0 b1;
  init b0;
  trans b0 Z -> b1;
  trans b0 * -> b0;
  trans b1 Z -> b1;
  trans b1 * -> b0;
  acceptance {b1} {b0 b1};
"""

AUTOMATA = """\
# configurations whose top symbol is Z; read bottom-up, so the last symbol decides
automaton atZ
  states z o;
  accepting z;
  trans p Z -> z;
  trans p * -> o;
  trans z Z -> z;
  trans z * -> o;
  trans o Z -> z;
  trans o * -> o;
"""

VALUATION = AUTOMATA + """
atom topZ = {Z};
atom done = eps;
atom moving = {I, D};
"""


def write(name: str, text: str, output_dir: str) -> str:
    path = os.path.join(output_dir, name)
    with open(path, "w") as f:
        f.write(text)
    print(f"Wrote {path}")
    return path


def make_fixtures(xs: List[str], output_dir: str) -> List[str]:
    os.makedirs(output_dir, exist_ok=True)
    written = []
    for text in xs:
        x = Fraction(text)
        if not 0 < x < 1:
            raise ValueError(f"x = {x} outside (0,1)")
        written.append(write(walk_file(x), walk_text(x), output_dir))
    written.append(write("walk.observers", OBSERVERS, output_dir))
    written.append(write("walk.automata", AUTOMATA, output_dir))
    written.append(write("walk.valuation", VALUATION, output_dir))
    return written


# Run the script
# python scripts/make_fixtures.py --x 1/3 1/2 2/3 3/4 --output data


def main():
    parser = argparse.ArgumentParser(description="Generate the Bernoulli walk fixtures")
    parser.add_argument("--x", nargs="+", default=DEFAULT_XS, help="walk parameters, e.g. 1/2 2/3")
    parser.add_argument("--output", "-o", type=str, default=DATA_DIR, help="output directory")
    args = parser.parse_args()
    try:
        make_fixtures(args.x, args.output)
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == "__main__":
    main()
