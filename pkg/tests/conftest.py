import numpy as np
import pytest

from chanest.harness import SweepConfig, run_sweep
from chanest.model import ScenarioConfig
from chanest.optimizer import EstimatorConfig

# user-1 power grid for the acceptance sweep: -60..-20 dBW in 4 dB steps
ACCEPTANCE_POWERS = tuple(float(p) for p in range(-60, -16, 4))
ACCEPTANCE_MASTER_SEED = 1729


def acceptance_sweep_config():
    """Full-scale acceptance sweep: production dimensions, 32 trials/point."""
    return SweepConfig(
        scenario=ScenarioConfig(N0=2.5e-6),
        estimator=EstimatorConfig(gamma_aic=24.0),
        powers=ACCEPTANCE_POWERS,
        trials=32,
        master_seed=ACCEPTANCE_MASTER_SEED,
        threads=1,
    )


@pytest.fixture(scope="session")
def acceptance_sweep():
    """One shared sweep run for the trend and determinism criteria."""
    return run_sweep(acceptance_sweep_config())
