"""Equilibrium flows on congested networks with smoothed dual and path-based solvers."""

from .network import (
    BPR,
    STABLE_DYNAMICS,
    CostParams,
    Network,
    NetworkError,
    convert_tntp,
    edge_cost,
    edge_cost_integral,
    conjugate_cost,
    conjugate_cost_gradient,
    load_network,
    topological_order,
)
from .smoothing import (
    DualPoint,
    EdgeFlow,
    PotentialTable,
    SolverError,
    flow_from_dual,
    log_sum_exp,
    psi_sink_ordered,
    psi_source_layered,
    psi_total,
    sample_path,
    sample_stochastic_gradient,
    transition_probabilities,
)
from .dual_solver import (
    Certificate,
    Equilibrium,
    SolverConfig,
    dual_objective,
    gamma_for_accuracy,
    path_count_bounds,
    read_flows_csv,
    solve,
    solve_dual_fgm,
    solve_dual_smd,
    solve_dual_universal,
    write_certificate_json,
    write_flows_csv,
)
from .path_solver import (
    PathFlow,
    PathSet,
    PenaltyConfig,
    PenaltyResult,
    build_path_set,
    primal_objective,
    solve_path_fgm,
    solve_penalty,
    uniform_flow,
)
from .estimators import EquilibriumSolver

__all__ = [
    "BPR",
    "STABLE_DYNAMICS",
    "CostParams",
    "Network",
    "NetworkError",
    "DualPoint",
    "EdgeFlow",
    "PotentialTable",
    "SolverError",
    "convert_tntp",
    "edge_cost",
    "edge_cost_integral",
    "conjugate_cost",
    "conjugate_cost_gradient",
    "load_network",
    "topological_order",
    "flow_from_dual",
    "log_sum_exp",
    "psi_sink_ordered",
    "psi_source_layered",
    "psi_total",
    "sample_path",
    "sample_stochastic_gradient",
    "transition_probabilities",
    "Certificate",
    "Equilibrium",
    "SolverConfig",
    "dual_objective",
    "gamma_for_accuracy",
    "path_count_bounds",
    "read_flows_csv",
    "solve",
    "solve_dual_fgm",
    "solve_dual_smd",
    "solve_dual_universal",
    "write_certificate_json",
    "write_flows_csv",
    "PathFlow",
    "PathSet",
    "PenaltyConfig",
    "PenaltyResult",
    "build_path_set",
    "primal_objective",
    "solve_path_fgm",
    "solve_penalty",
    "uniform_flow",
    "EquilibriumSolver",
]

__version__ = "0.1.0"
