"""Entropic OT by stabilized Sinkhorn scaling.

Potentials ``f, g`` are kept in the log domain. Between absorptions the
iterations run on the stabilized kernel

    K_ij = exp((f_i + g_j - C_ij) / eps)

with scalings ``alpha, beta`` so that the plan is
``pi_ij = a_i alpha_i K_ij beta_j b_j``. When a scaling drifts outside
``[exp(-ABSORB), exp(ABSORB)]`` it is folded back into the potentials and the
kernel is rebuilt, so nothing overflows or underflows however small ``eps``
is. A log-sum-exp (max-stabilized) update re-seeds any row or column whose
kernel sum underflows. Epsilon annealing (coarse-to-fine warm starts) keeps
the iteration count manageable at small ``eps``.
"""

import warnings

import numpy as np
from scipy.special import logsumexp

from ..errors import InputError, NotConvergedWarning
from .types import SolverConfig, TransportSolution, regauge

ABSORB = 30.0
ANNEAL_FACTOR = 0.25
# stages before the last stop at this L1 residual (or the final tol if larger)
STAGE_TOL = 1e-3
# small instances whose last stage stalls this long switch to Newton steps
POLISH_AFTER = 500
POLISH_MAX_DIM = 4000
TRUST = 10.0
BLOCK = 1 << 22  # entries per block for the log-domain passes


def _log_update_rows(C, g, logb, eps):
    """f_i = -eps * log sum_j b_j exp((g_j - C_ij) / eps), computed blockwise."""
    N, M = C.shape
    f = np.empty(N)
    step = max(1, BLOCK // M)
    for s in range(0, N, step):
        Z = (g[None, :] - C[s : s + step]) / eps
        Z += logb[None, :]
        f[s : s + step] = -eps * logsumexp(Z, axis=1)
    return f


def _kernel(C, f, g, eps, out):
    """out <- exp((f_i + g_j - C_ij) / eps), in place, row block by row block."""
    N, M = C.shape
    step = max(1, BLOCK // M)
    for s in range(0, N, step):
        blk = out[s : s + step]
        np.subtract(g[None, :], C[s : s + step], out=blk)
        blk += f[s : s + step, None]
        blk /= eps
        np.exp(blk, out=blk)
    return out


def _logb(b):
    with np.errstate(divide="ignore"):
        return np.log(b)


def _schedule(C, eps, anneal):
    if not anneal:
        return [eps]
    start = float(C.max() - C.min())
    stages = []
    e = start
    while e > eps:
        stages.append(e)
        e *= ANNEAL_FACTOR
    stages.append(eps)
    return stages


def solve_sinkhorn(cost, cfg=None):
    """Solve ``min <pi, C> + eps * KL(pi | a x b)`` over couplings of ``a, b``.

    Iterates until the L1 column-marginal error is at most ``cfg.tol`` (rows
    are matched exactly after every half step) or ``cfg.max_iters`` scaling
    iterations have run. A run that hits the cap returns its last iterate with
    ``converged=False`` and emits ``NotConvergedWarning``. On small instances
    (``N + M <= POLISH_MAX_DIM``) a final stage that stalls for
    ``POLISH_AFTER`` iterations is finished with Newton steps on the same
    entropic dual.

    Returns
    -------
    TransportSolution
        ``objective`` is the transport cost ``<pi, C>`` without the entropy
        term; duals satisfy ``pi_ij = a_i b_j exp((f_i + g_j - C_ij) / eps)``
        and are re-gauged so that ``dual_g[-1] == 0``.
    """
    if cfg is None:
        cfg = SolverConfig()
    if cfg.mode != "sinkhorn":
        raise InputError("solve_sinkhorn needs cfg.mode == 'sinkhorn'")
    C = cost.values
    a, b = cost.row_measure, cost.col_measure
    N, M = C.shape
    eps_final = float(cfg.epsilon)
    tol = float(cfg.tol)
    loga, logb = _logb(a), _logb(b)

    K = np.empty((N, M))
    f = np.zeros(N)
    g = np.zeros(M)
    iters = 0
    err = np.inf
    stages = _schedule(C, eps_final, cfg.eps_scaling)
    polish = N + M <= POLISH_MAX_DIM
    for stage, eps in enumerate(stages):
        last = stage == len(stages) - 1
        stage_tol = tol if last else max(tol, STAGE_TOL)
        f = _log_update_rows(C, g, logb, eps)
        g = _log_update_cols(C, f, loga, eps)
        _kernel(C, f, g, eps, K)
        alpha = np.ones(N)
        beta = np.ones(M)
        stage_start = iters
        while iters < cfg.max_iters:
            iters += 1
            t = K @ (b * beta)
            with np.errstate(divide="ignore"):
                alpha = 1.0 / t
            s = K.T @ (a * alpha)
            err = float(np.abs(b * beta * s - b).sum())
            if not np.isfinite(err):
                err = np.inf
            if err <= stage_tol and np.isfinite(alpha).all():
                break
            if last and polish and iters - stage_start >= POLISH_AFTER:
                break
            with np.errstate(divide="ignore"):
                beta = 1.0 / s
            if not (np.isfinite(alpha).all() and np.isfinite(beta).all()):
                # some kernel row or column underflowed: re-seed in log domain
                f, g = _absorb(f, g, alpha, beta, eps)
                f = _log_update_rows(C, g, logb, eps)
                g = _log_update_cols(C, f, loga, eps)
                _kernel(C, f, g, eps, K)
                alpha = np.ones(N)
                beta = np.ones(M)
                continue
            la, lb = np.log(alpha), np.log(beta)
            if max(np.abs(la).max(), np.abs(lb).max()) > ABSORB:
                f = f + eps * la
                g = g + eps * lb
                _kernel(C, f, g, eps, K)
                alpha = np.ones(N)
                beta = np.ones(M)
        else:
            break
        if not last:
            f, g = _absorb(f, g, alpha, beta, eps)
    converged = err <= tol and eps == eps_final
    if not converged and polish and eps == eps_final and np.isfinite(alpha).all():
        f, g = _absorb(f, g, alpha, beta, eps)
        # aim below tol: renormalizing rows afterwards can double the column error
        f, g, err, steps = _newton_polish(C, a, b, f, g, eps, 0.25 * tol, loga, logb)
        iters += steps
        converged = err <= tol
        _kernel(C, f, g, eps, K)
        alpha = 1.0 / (K @ b)
        beta = np.ones(M)
    with np.errstate(divide="ignore"):
        f_out = f + eps * np.log(alpha)
        g_out = g + eps * np.log(beta)
    # the plan reuses the kernel buffer
    plan = K
    plan *= (a * alpha)[:, None]
    plan *= (b * beta)[None, :]
    if polish:
        err = max(float(np.abs(plan.sum(axis=0) - b).sum()), float(np.abs(plan.sum(axis=1) - a).sum()))
        converged = converged and err <= tol
    objective = float(np.vdot(plan, C))
    row_err = float(np.abs(plan.sum(axis=1) - a).sum())
    residual = max(row_err, float(err))
    f_out, g_out = regauge(_finite(f_out), _finite(g_out))
    if not converged:
        warnings.warn(
            f"Sinkhorn stopped after {iters} iterations with residual {residual:.3g}",
            NotConvergedWarning,
        )
    return TransportSolution(
        plan=plan,
        dual_f=f_out,
        dual_g=g_out,
        objective=objective,
        residual=residual,
        iterations=iters,
        mode="sinkhorn",
        epsilon=eps_final,
        converged=bool(converged),
        row_measure=a,
        col_measure=b,
    )


def _absorb(f, g, alpha, beta, eps):
    with np.errstate(divide="ignore", invalid="ignore"):
        la = np.where(np.isfinite(alpha) & (alpha > 0), np.log(alpha), 0.0)
        lb = np.where(np.isfinite(beta) & (beta > 0), np.log(beta), 0.0)
    return f + eps * la, g + eps * lb


def _log_update_cols(C, f, loga, eps):
    """Column counterpart of ``_log_update_rows`` without transposed copies."""
    N, M = C.shape
    acc = np.full(M, -np.inf)
    step = max(1, BLOCK // M)
    for s in range(0, N, step):
        Z = (f[s : s + step, None] - C[s : s + step]) / eps
        Z += loga[s : s + step, None]
        acc = np.logaddexp(acc, logsumexp(Z, axis=0))
    return -eps * acc


def _finite(x):
    # zero-mass points can leave -inf scalings; their duals carry no weight
    x = np.asarray(x, dtype=float)
    if np.isfinite(x).all():
        return x
    out = x.copy()
    out[~np.isfinite(out)] = 0.0
    return out


def _newton_polish(C, a, b, f, g, eps, tol, loga, logb, max_steps=200):
    """Newton ascent on the entropic dual with ``g[-1]`` held fixed.

    Used when plain scaling stalls on a nearly degenerate instance; the
    Hessian is the (N+M-1)-square matrix of plan marginals and entries.
    """
    N, M = C.shape
    pos_a, pos_b = a > 0, b > 0
    rows = np.flatnonzero(pos_a)
    cols = np.flatnonzero(pos_b[:-1])

    # exact block updates first, so no row or column of the plan has underflowed
    g = _log_update_cols(C, f, loga, eps)
    f = _log_update_rows(C, g, logb, eps)

    def dual(f, g):
        Z = (f[:, None] + g[None, :] - C) / eps + loga[:, None] + logb[None, :]
        with np.errstate(over="ignore"):
            P = np.exp(Z)
        return float(f[pos_a] @ a[pos_a] + g[pos_b] @ b[pos_b] - eps * P.sum()), P

    val, P = dual(f, g)
    err = np.inf
    for step in range(max_steps):
        ga = a - P.sum(axis=1)
        gb = b - P.sum(axis=0)
        err = max(np.abs(ga).sum(), np.abs(gb).sum())
        if err <= tol:
            return f, g, err, step
        r, c = rows.size, cols.size
        H = np.zeros((r + c, r + c))
        H[np.arange(r), np.arange(r)] = P.sum(axis=1)[rows]
        H[r + np.arange(c), r + np.arange(c)] = P.sum(axis=0)[cols]
        H[:r, r:] = P[np.ix_(rows, cols)]
        H[r:, :r] = H[:r, r:].T
        H /= eps
        # small ridge: keeps the solve accurate when the plan nearly splits
        H[np.diag_indices_from(H)] += 1e-10 * H.diagonal().max()
        rhs = np.concatenate([ga[rows], gb[cols]])
        try:
            d = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(H, rhs, rcond=None)[0]
        # a nearly split plan asks for a huge block shift; take it in
        # pieces of at most TRUST * eps per potential
        big = np.abs(d).max() / (TRUST * eps)
        if big > 1:
            d /= big
        df = np.zeros(N)
        dg = np.zeros(M)
        df[rows] = d[:r]
        dg[cols] = d[r:]
        slope = float(rhs @ d)
        t = 1.0
        while t > 1e-12:
            new_val, new_P = dual(f + t * df, g + t * dg)
            if np.isfinite(new_val) and new_val >= val + 0.25 * t * slope:
                break
            # ascent below the rounding of the dual value: accept a smaller gradient
            if np.isfinite(new_val) and (
                max(np.abs(a - new_P.sum(axis=1)).sum(), np.abs(b - new_P.sum(axis=0)).sum()) < err
            ):
                break
            t *= 0.5
        else:
            return f, g, err, step
        f, g, val, P = f + t * df, g + t * dg, new_val, new_P
    ga = a - P.sum(axis=1)
    gb = b - P.sum(axis=0)
    return f, g, max(np.abs(ga).sum(), np.abs(gb).sum()), max_steps
