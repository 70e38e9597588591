"""Simulation and verification toolkit for transportation-cost concentration
of diffusion laws on path space and for boundary local times of rank-based
particle systems.
"""

__version__ = "0.1.0"

from .errors import (
    CertificationError,
    ConcLabError,
    ConfigError,
    NonConvergenceError,
    NumericalError,
    SimulationError,
)
from .paths import (
    Ensemble,
    MetricKind,
    MultiPath,
    Path,
    PathMetric,
    SeedLineage,
    TimeGrid,
    make_grid,
    metric_dominance_check,
    metric_eval,
)
from .sde import (
    DiffusionSpec,
    DriftSpec,
    RankModelSpec,
    SdeSystem,
    SimConfig,
    euler_maruyama,
    simulate_rank_model,
    synchronous_couple,
)
from .domain import PolyhedralDomain, chamber
from .geometry import certificate, chamber_certificate, spectral_radius
from .skorokhod import rank_local_times, skorokhod_map_1d, solve_sp
from .transport import orlicz_norm, qtci_constants, qtci_verify, wasserstein_exact
from .concentration import TailReport, median_and_tails, thm1_experiment

__all__ = [
    "CertificationError",
    "ConcLabError",
    "ConfigError",
    "NonConvergenceError",
    "NumericalError",
    "SimulationError",
    "Ensemble",
    "MetricKind",
    "MultiPath",
    "Path",
    "PathMetric",
    "SeedLineage",
    "TimeGrid",
    "make_grid",
    "metric_dominance_check",
    "metric_eval",
    "DiffusionSpec",
    "DriftSpec",
    "RankModelSpec",
    "SdeSystem",
    "SimConfig",
    "euler_maruyama",
    "simulate_rank_model",
    "synchronous_couple",
    "PolyhedralDomain",
    "chamber",
    "certificate",
    "chamber_certificate",
    "spectral_radius",
    "rank_local_times",
    "skorokhod_map_1d",
    "solve_sp",
    "orlicz_norm",
    "qtci_constants",
    "qtci_verify",
    "wasserstein_exact",
    "TailReport",
    "median_and_tails",
    "thm1_experiment",
]
