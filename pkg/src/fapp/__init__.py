"""Flatness-based path following for quadrotors with a condensed linear MPC."""

from .baseline import TimedReference, TrackerGains, track
from .config import ExperimentConfig, case_config
from .errors import (
    ConfigError,
    DegeneratePath,
    DegenerateThrust,
    DimensionMismatch,
    DomainError,
    FappError,
    MissingEpisode,
    NonFiniteState,
    NumericalBreakdown,
    QpInfeasible,
    TiltLimit,
)
from .experiment import (
    EpisodeResult,
    MetricsReport,
    compare,
    generate_nominal_reference,
    run_episode,
    run_episodes,
    write_outputs,
)
from .flatness import CommandInput, QuadrotorParams, QuadrotorState, phi_state, psi_inverse
from .mpc import ConstraintSpec, OcpWeights, PathFollowingMPC
from .path import BezierPath, petal_path
from .qp import DenseQpSolver, QpSolution, QpStatus
from .simulator import WindMode, WindModel, step

__version__ = "0.1.0"

__all__ = [
    "BezierPath", "CommandInput", "ConfigError", "ConstraintSpec", "DegeneratePath",
    "DegenerateThrust", "DenseQpSolver", "DimensionMismatch", "DomainError", "EpisodeResult",
    "ExperimentConfig", "FappError", "MetricsReport", "MissingEpisode", "NonFiniteState",
    "NumericalBreakdown", "OcpWeights", "PathFollowingMPC", "QpInfeasible", "QpSolution",
    "QpStatus", "QuadrotorParams", "QuadrotorState", "TiltLimit", "TimedReference",
    "TrackerGains", "WindMode", "WindModel", "case_config", "compare",
    "generate_nominal_reference", "petal_path", "phi_state", "psi_inverse", "run_episode",
    "run_episodes", "step", "track", "write_outputs",
]
