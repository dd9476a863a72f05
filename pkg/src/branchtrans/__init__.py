"""Branched optimal transport on atomic measures: traffic plans, dynamical paths and d_alpha."""

from .branched import (BoundReport, BranchedGraph, SteinerTopology, compute_dalpha, dalpha_lower_bound,
                       dyadic_rhs_bound, dyadic_upper_bound, enumerate_topologies, gilbert_energy,
                       optimize_branch_points, sandwich_report, tree_flow_masses)
from .dynamical_paths import (DynamicalPath, TimeSlice, continuity_residual, plan_to_path, reparametrize,
                              slice_F, total_F)
from .exact_ot import TransportPlan, assert_acyclic_support, solve_kantorovich, wasserstein
from .geometry import AtomicMeasure, CellWeights, DomainBox, dyadic_approximation, grid_galpha_estimate, make_measure
from .traffic_plans import MassCurve, TrafficPlan, energy_C, energy_E

__all__ = [
    "AtomicMeasure", "BoundReport", "BranchedGraph", "CellWeights", "DomainBox", "DynamicalPath", "MassCurve",
    "SteinerTopology", "TimeSlice", "TrafficPlan", "TransportPlan", "assert_acyclic_support", "compute_dalpha",
    "continuity_residual", "dalpha_lower_bound", "dyadic_approximation", "dyadic_rhs_bound", "dyadic_upper_bound",
    "energy_C", "energy_E", "enumerate_topologies", "gilbert_energy", "grid_galpha_estimate", "make_measure",
    "optimize_branch_points", "plan_to_path", "reparametrize", "sandwich_report", "slice_F", "solve_kantorovich",
    "total_F", "tree_flow_masses", "wasserstein",
]
