"""Monitored single particle on a chain: trajectories and configuration coherence."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    SimulationParams,
    build_hamiltonian,
    build_propagator,
    init_localized,
    local_densities,
    position_variance,
    validate_state,
)
from .engine import (  # noqa: E402
    NumericBreakdown,
    euler_maruyama_step,
    kraus_operator,
    kraus_step,
    run_ensemble,
    run_trajectory,
    sample_wiener,
)
from .entanglement import (  # noqa: E402
    config_coherence,
    max_mean_coherence,
    mean_coherence,
    negativity_from_coherence,
)
from .kernel import BACKEND  # noqa: E402

__all__ = [
    "BACKEND",
    "NumericBreakdown",
    "SimulationParams",
    "build_hamiltonian",
    "build_propagator",
    "config_coherence",
    "euler_maruyama_step",
    "init_localized",
    "kraus_operator",
    "kraus_step",
    "local_densities",
    "max_mean_coherence",
    "mean_coherence",
    "negativity_from_coherence",
    "position_variance",
    "run_ensemble",
    "run_trajectory",
    "sample_wiener",
    "validate_state",
]
