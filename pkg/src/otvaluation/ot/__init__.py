"""Ground costs and the three transport solvers."""

from .barrier import solve_log_barrier, stationarity_residual
from .network_simplex import solve_exact_lp, tree_flows
from .sinkhorn import solve_sinkhorn
from .types import (
    CostMatrix,
    SolverConfig,
    TransportSolution,
    euclidean_cost,
    marginal_residual,
    regauge,
)

_SOLVERS = {
    "sinkhorn": solve_sinkhorn,
    "exact_lp": solve_exact_lp,
    "log_barrier": solve_log_barrier,
}


def solve(cost, cfg):
    """Dispatch on ``cfg.mode``."""
    return _SOLVERS[cfg.mode](cost, cfg)


__all__ = [
    "CostMatrix",
    "SolverConfig",
    "TransportSolution",
    "euclidean_cost",
    "marginal_residual",
    "regauge",
    "solve",
    "solve_exact_lp",
    "solve_log_barrier",
    "solve_sinkhorn",
    "stationarity_residual",
    "tree_flows",
]
