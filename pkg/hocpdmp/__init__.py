"""
hocpdmp - House-of-cards PDMP toolkit

Simulation and numerical verification for piecewise deterministic Markov
processes with house-of-cards jumps: exact thinning, skeleton derivation
matrices, invariant-measure identities and one-step density propagation.

Usage:
    CLI: hocpdmp neuron-demo --N 2
    API: from hocpdmp import threshold; result = threshold(3, 2.0, 1.0)
"""

from .__version__ import __version__, __app_name__
from .api import ToolResult, check_good, neuron_demo, run_experiment, simulate, threshold

__all__ = [
    "__version__",
    "__app_name__",
    "ToolResult",
    "check_good",
    "neuron_demo",
    "run_experiment",
    "simulate",
    "threshold",
]
