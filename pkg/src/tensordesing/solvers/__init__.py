"""Solvers on the desingularized Tucker manifold and a product-space comparison."""

from .config import RTRConfig, SolverConfig
from .descent import (baseline_tucker_rcg, baseline_tucker_rgd, conjugate_direction, monotone, rcg_solve,
                      rgd_solve)
from .linesearch import armijo_backtracking, exact_linesearch
from .manifolds import DesingManifold, TuckerProductManifold
from .objective import DenseObjective
from .rtr import TCGResult, model_decrease, rtr_solve, tcg_subproblem, update_radius
from .stopping import stopping_check
from .trace import TRACE_FIELDS, IterationRecord, IterationTrace, read_trace_csv

SOLVERS = {
    "rgd-desing": rgd_solve,
    "rcg-desing": rcg_solve,
    "rtr-desing": rtr_solve,
    "rgd-tucker": baseline_tucker_rgd,
    "rcg-tucker": baseline_tucker_rcg,
}

__all__ = [
    "SOLVERS", "RTRConfig", "SolverConfig", "DenseObjective", "DesingManifold", "TuckerProductManifold",
    "IterationRecord", "IterationTrace", "TRACE_FIELDS", "TCGResult", "armijo_backtracking",
    "baseline_tucker_rcg", "baseline_tucker_rgd", "conjugate_direction", "exact_linesearch", "model_decrease", "monotone",
    "rcg_solve", "read_trace_csv", "rgd_solve", "rtr_solve", "stopping_check", "tcg_subproblem",
    "update_radius",
]
