"""
Constants shared by the ppda package: numeric defaults, reserved names and
solver command templates.
"""

from fractions import Fraction

# Control state of a pBPA (the header `pbpa` declares no states)
PBPA_STATE = "p"

# Names introduced by the library (normalization, negation-free atoms,
# bootstrap heads) start with this prefix; user input may not use it.
FRESH_PREFIX = "~"

# Interval widths and outward rounding
DEFAULT_WIDTH = Fraction(1, 1000)
DYADIC_BITS = 64

# Iteration budgets
MAX_ITERATIONS = 20000
MAX_REFINEMENTS = 12
KLEENE_CHUNK = 64

# Denominators tried when snapping a lower bound to a post-fixed certificate
SNAP_DENOMINATOR_LIMIT = 64

# External solver
SOLVER_TIMEOUT = 30
# extra seconds the subprocess may take beyond the solver's own time limit
SOLVER_GRACE = 5
Z3_COMMAND = "z3 -smt2 -T:{tlimit} {{}}"
RUNNER_COMMAND = "{python} {runner} --tlimit {tlimit} {{}}"

# Monte Carlo defaults
DEFAULT_RUNS = 2000
DEFAULT_HORIZON = 1000
UNIFORM_BITS = 53

# Error-tolerant pBPA checking: refinement passes of the parameter loop and
# the largest word set G enumerated for one threshold automaton
MAX_PARAM_PASSES = 64
MAX_G_WORDS = 250000
