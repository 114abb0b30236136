"""Log-barrier penalized OT, solved by damped Newton on the dual.

The program is

    min_pi  <pi, C> - eps * sum_ij log(pi_ij / (a_i b_j))
    s.t.    pi 1 = a,  pi^T 1 = b.

Its stationarity condition, with duals in the usual sign convention, is

    C_ij - eps / pi_ij - f_i - g_j = 0,

so ``pi_ij = eps / (C_ij - f_i - g_j)``. The concave dual

    D(f, g) = <f, a> + <g, b> + eps * sum_ij log(C_ij - f_i - g_j) + const

is maximized over the open set ``f_i + g_j < C_ij`` with ``g[-1] = 0`` held
fixed, which removes the redundant marginal constraint. Plans are always
formed from the current duals, so stationarity holds to rounding at every
iterate and only the marginals converge.
"""

import warnings

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve

from ..errors import InputError, InstanceTooLarge, NotConvergedWarning
from .types import SolverConfig, TransportSolution

MAX_CELLS = 4096
CONTINUATION = 0.2


def _dual_value(u, v, a, b, S, eps):
    return float(u @ a + v @ b + eps * np.log(S).sum())


def _newton(C, a, b, u, v, eps, tol, max_steps):
    """Maximize the barrier dual at fixed eps from a strictly feasible start."""
    N, M = C.shape
    steps = 0
    while True:
        S = C - u[:, None] - v[None, :]
        P = eps / S
        gu = a - P.sum(axis=1)
        gv = b - P.sum(axis=0)
        gnorm = max(np.abs(gu).sum(), np.abs(gv).sum())
        if gnorm <= tol or steps >= max_steps:
            return u, v, gnorm, steps
        W = P * P / eps  # eps / S^2
        k = N + M - 1
        H = np.zeros((k, k))
        H[np.arange(N), np.arange(N)] = W.sum(axis=1)
        idx = np.arange(N, k)
        H[idx, idx] = W.sum(axis=0)[: M - 1]
        H[:N, N:] = W[:, : M - 1]
        H[N:, :N] = W[:, : M - 1].T
        rhs = np.concatenate([gu, gv[: M - 1]])
        try:
            d = cho_solve(cho_factor(H), rhs)
        except LinAlgError:
            d = solve(H, rhs, assume_a="sym")
        du = d[:N]
        dv = np.zeros(M)
        dv[: M - 1] = d[N:]
        dS = du[:, None] + dv[None, :]
        # largest step keeping every slack positive, then Armijo backtracking
        t = 1.0
        grow = dS > 0
        if grow.any():
            t = min(1.0, 0.99 * float((S[grow] / dS[grow]).min()))
        base = _dual_value(u, v, a, b, S, eps)
        slope = float(rhs @ d)
        while True:
            un, vn = u + t * du, v + t * dv
            Sn = C - un[:, None] - vn[None, :]
            if Sn.min() > 0:
                if _dual_value(un, vn, a, b, Sn, eps) >= base + 0.25 * t * slope:
                    break
                # near the optimum the ascent drops below rounding of the dual
                # value; fall back to requiring a smaller gradient
                Pn = eps / Sn
                if max(np.abs(a - Pn.sum(axis=1)).sum(), np.abs(b - Pn.sum(axis=0)).sum()) < gnorm:
                    break
            t *= 0.5
            if t < 1e-16:
                break
        if t < 1e-16:
            # no ascent possible at working precision
            return u, v, gnorm, steps
        u, v = un, vn
        steps += 1


def solve_log_barrier(cost, cfg=None):
    """Solve the log-barrier penalized transport problem to ``cfg.tol``.

    ``cfg.tol`` bounds the L1 marginal residual (the dual gradient norm).
    The barrier weight is lowered geometrically from the cost scale down to
    ``cfg.epsilon`` with Newton warm starts. Every plan entry is positive and
    ``<pi, C>`` lies within ``eps * N * M`` of the exact OT value.
    """
    if cfg is None:
        cfg = SolverConfig(mode="log_barrier", epsilon=0.1)
    if cfg.mode != "log_barrier":
        raise InputError("solve_log_barrier needs cfg.mode == 'log_barrier'")
    C = cost.values
    a, b = cost.row_measure, cost.col_measure
    N, M = C.shape
    if N * M > MAX_CELLS:
        raise InstanceTooLarge(f"{N}x{M} exceeds the barrier-solver cap of {MAX_CELLS} cells")
    eps = float(cfg.epsilon)
    scale = max(float(C.mean()), float(C.max()), 1e-12)

    u = C.min(axis=1) - scale
    v = np.zeros(M)
    schedule = []
    e = max(eps, scale)
    while e > eps:
        schedule.append(e)
        e *= CONTINUATION
    schedule.append(eps)

    total = 0
    gnorm = np.inf
    for k, e in enumerate(schedule):
        last = k == len(schedule) - 1
        u, v, gnorm, steps = _newton(
            C, a, b, u, v, e, cfg.tol if last else max(cfg.tol, 1e-6), cfg.max_iters - total
        )
        total += steps
    converged = gnorm <= cfg.tol
    S = C - u[:, None] - v[None, :]
    plan = eps / S
    residual = max(np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum())
    if not converged:
        warnings.warn(
            f"log-barrier Newton stopped with residual {residual:.3g}", NotConvergedWarning
        )
    v = v.copy()
    v[-1] = 0.0
    return TransportSolution(
        plan=plan,
        dual_f=u,
        dual_g=v,
        objective=float(np.vdot(plan, C)),
        residual=float(residual),
        iterations=total,
        mode="log_barrier",
        epsilon=eps,
        converged=bool(converged),
        row_measure=a,
        col_measure=b,
    )


def stationarity_residual(cost, sol):
    """max_ij |C_ij - eps / pi_ij - f_i - g_j|."""
    C = cost.values
    return float(np.abs(C - sol.epsilon / sol.plan - sol.dual_f[:, None] - sol.dual_g[None, :]).max())
