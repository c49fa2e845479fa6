"""Weighted join-the-shortest-queue networks: simulation, fluid limits and
large-deviation rate computations."""

from .cost import CostModel, PoissonCost, PoissonTerm, pi, pi_vec, psi_poisson
from .fluid import FluidSolution, fluid_route_step, fluid_solve, lyapunov_check, water_fill
from .ldp import (
    ActionReport,
    ActionSegment,
    RareEventSpec,
    estimate_rare_event,
    minimize_action,
    path_action,
    wilson_interval,
)
from .piecewise import PiecewisePath
from .rate import (
    DomainLabel,
    RateWitness,
    SolverError,
    classify_domain,
    label_matches,
    local_rate,
    local_rate_bruteforce,
    psi_ij,
)
from .sim import SamplePath, TieRule, audit, scale_counters, scale_path, simulate, terminal_statistics
from .topology import Topology, TopologyError, dump, load, validate

__version__ = "0.1.0"

__all__ = [
    "ActionReport",
    "ActionSegment",
    "CostModel",
    "DomainLabel",
    "FluidSolution",
    "PiecewisePath",
    "PoissonCost",
    "PoissonTerm",
    "RareEventSpec",
    "RateWitness",
    "SamplePath",
    "SolverError",
    "TieRule",
    "Topology",
    "TopologyError",
    "audit",
    "classify_domain",
    "dump",
    "estimate_rare_event",
    "fluid_route_step",
    "fluid_solve",
    "label_matches",
    "load",
    "local_rate",
    "local_rate_bruteforce",
    "lyapunov_check",
    "minimize_action",
    "path_action",
    "pi",
    "pi_vec",
    "psi_ij",
    "psi_poisson",
    "scale_counters",
    "scale_path",
    "simulate",
    "terminal_statistics",
    "validate",
    "water_fill",
    "wilson_interval",
]
