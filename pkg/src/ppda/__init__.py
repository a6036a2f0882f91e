"""
Model checking of probabilistic pushdown automata: until probabilities,
qualitative and error-tolerant PCTL, and observer/Muller properties
through the chain of stack minima.
"""

__version__ = "0.1.0"
