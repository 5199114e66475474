"""l1-regularized composite optimization over the Stiefel manifold.

Library plus benchmark harness: an adaptive quadratically regularized
proximal quasi-Newton solver (with a semismooth-Newton dual subproblem
solver, three retractions and a proximal-gradient baseline) and the
compressed-modes / sparse-PCA problem generators.
"""

from .stiefel import (
    RetractionKind,
    StiefelPoint,
    TangentVector,
    feasibility_residual,
    project_tangent,
    random_point,
    retract,
    riemannian_gradient,
)
from .metric import (
    CurvaturePair,
    DiagonalMetric,
    LbfgsMemory,
    build_diag,
    damp_pair,
    metric_norm_sq,
    theta_init,
)
from .subproblem import (
    SubproblemResult,
    jacobian_apply,
    prox_l1_weighted,
    residual_E,
    ssn_solve,
    v_of_lambda,
)
from .solver import (
    Mode,
    SolveResult,
    SolverConfig,
    Status,
    TraceRecord,
    compute_rho,
    line_search,
    nonmonotone_reference,
    pg_baseline_metric,
    solve,
    update_sigma,
    write_trace_csv,
)
from .problems import (
    CompositeProblem,
    load_matrix_csv,
    make_cm,
    make_problem,
    make_spca,
    save_matrix_csv,
    schrodinger_operator,
    sparsity,
)
from .bench import ExperimentSpec, SummaryRow, emit_csv, run_experiment

__all__ = [
    "RetractionKind", "StiefelPoint", "TangentVector", "feasibility_residual",
    "project_tangent", "random_point", "retract", "riemannian_gradient",
    "CurvaturePair", "DiagonalMetric", "LbfgsMemory", "build_diag",
    "damp_pair", "metric_norm_sq", "theta_init",
    "SubproblemResult", "jacobian_apply", "prox_l1_weighted", "residual_E",
    "ssn_solve", "v_of_lambda",
    "Mode", "SolveResult", "SolverConfig", "Status", "TraceRecord",
    "compute_rho", "line_search", "nonmonotone_reference",
    "pg_baseline_metric", "solve", "update_sigma", "write_trace_csv",
    "CompositeProblem", "load_matrix_csv", "make_cm", "make_problem",
    "make_spca", "save_matrix_csv", "schrodinger_operator", "sparsity",
    "ExperimentSpec", "SummaryRow", "emit_csv", "run_experiment",
]

__version__ = "0.1.0"
