"""Gilbert networks, d_alpha on atomic measures, and dyadic bounds."""

from .bounds import (BoundReport, DyadicRecord, dyadic_route, dyadic_rhs_bound, dyadic_truncated_cost,
                     dyadic_upper_bound, log2_slope, sandwich_report)
from .dalpha import DalphaResult, compute_dalpha, dalpha_lower_bound
from .graph import (BranchedGraph, flow_paths, gilbert_energy, graph_to_plan, net_terminals, read_graph_csv,
                    write_graph_csv)
from .optimize import optimize_branch_points
from .topology import SteinerTopology, enumerate_topologies, tree_flow_masses

__all__ = [
    "BoundReport", "BranchedGraph", "DalphaResult", "DyadicRecord", "SteinerTopology", "compute_dalpha",
    "dalpha_lower_bound", "dyadic_rhs_bound", "dyadic_route", "dyadic_truncated_cost", "dyadic_upper_bound",
    "enumerate_topologies", "flow_paths", "gilbert_energy", "graph_to_plan", "log2_slope", "net_terminals",
    "optimize_branch_points", "read_graph_csv", "sandwich_report", "tree_flow_masses", "write_graph_csv",
]
