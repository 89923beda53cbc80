"""Information velocity of packet-erasure cascades: closed forms, delay
tail bounds, error exponents, and a validating discrete-time simulator."""

from .analytic import (
    AnalyticError,
    BoundsReport,
    ExponentReport,
    exact_failure_prob,
    exponent_report,
    failure_prob_bounds,
    information_velocity,
    kl_binary,
)
from .model import (
    LinkMode,
    Scenario,
    ScenarioError,
    VelocityDefinition,
    load_scenario,
    save_scenario,
    validate_scenario,
)
from .sim import TraceStats, empirical_failure_ratio, simulate_tandem

__version__ = "0.1.0"

__all__ = [
    "AnalyticError",
    "BoundsReport",
    "ExponentReport",
    "LinkMode",
    "Scenario",
    "ScenarioError",
    "TraceStats",
    "VelocityDefinition",
    "empirical_failure_ratio",
    "exact_failure_prob",
    "exponent_report",
    "failure_prob_bounds",
    "information_velocity",
    "kl_binary",
    "load_scenario",
    "save_scenario",
    "simulate_tandem",
    "validate_scenario",
    "__version__",
]
