"""Deterministic simulator for decentralized gradient methods with nested consensus."""

from .accounting import CostModel, RunTrace, TraceRecorder, consensus_error, cost_series, relative_error
from .engine import DivergenceError, MethodConfig, method_from_label, run
from .objectives import (
    GroundTruth,
    LocalObjectiveSet,
    build_logistic,
    centralized_solve,
    generate_quadratic,
    quadratic_optimum,
)
from .schedules import ConsensusSchedule
from .theory import dgdt_bounds, max_stepsize, theory_bounds
from .topology import ConsensusMatrix, build_topology, consensus_apply, metropolis_weights

__version__ = "0.1.0"
