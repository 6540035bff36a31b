"""Multiuser MIMO-OFDM uplink parametric channel estimation.

Core library (model, likelihood, derivatives, rootfind, optimizer,
harness), a FastAPI service wrapping it, and a thin-client CLI.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    PathParams,
    PhysicalGrid,
    Scenario,
    ScenarioConfig,
    check_isotropy,
    generate_isotropic_pilots,
    omega_to_physical,
    sample_scenario,
    steering,
    synthesize_mean,
    synthesize_received,
)
from .optimizer import EstimateResult, EstimatorConfig, estimate  # noqa: F401
