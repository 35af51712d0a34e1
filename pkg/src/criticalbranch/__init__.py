"""Critical continuous-time branching systems with immigration.

Numerics for the transition generating functions, invariant measures, and
asymptotic structure of critical branching with heavy-tailed offspring and
immigration: adaptive ODE solvers with exact closed forms, truncated-series
coefficient extraction, a brute-force uniformization oracle, exact-event
Monte Carlo, and convergence-rate measurement, all behind one CLI.
"""

__version__ = "0.1.0"

from .laws import (
    ImmigrationLaw,
    OffspringLaw,
    RegimeParams,
    classify,
    make_finite_immigration,
    make_finite_offspring,
    make_perturbed_offspring,
    make_stable_immigration,
    make_stable_offspring,
)
from .series import Series

__all__ = [
    "__version__",
    "ImmigrationLaw",
    "OffspringLaw",
    "RegimeParams",
    "Series",
    "classify",
    "make_finite_immigration",
    "make_finite_offspring",
    "make_perturbed_offspring",
    "make_stable_immigration",
    "make_stable_offspring",
]
