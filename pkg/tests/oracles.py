"""Reference computations that share no code with the package."""

import numpy as np
from scipy.optimize import linprog


def lp_transport(C, a, b):
    """Transportation LP via HiGHS; duals shifted so that ``g[-1] == 0``."""
    C = np.asarray(C, float)
    N, M = C.shape
    A = np.zeros((N + M, N * M))
    for i in range(N):
        A[i, i * M : (i + 1) * M] = 1
    for j in range(M):
        A[N + j, j::M] = 1
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    assert res.status == 0, res.message
    y = res.eqlin.marginals
    f, g = y[:N], y[N:]
    return res.fun, f + g[-1], g - g[-1], res.x.reshape(N, M)


def plain_sinkhorn(C, a, b, eps, iters=20000):
    """Textbook scaling iterations in the probability domain."""
    K = np.exp(-C / eps)
    v = np.ones(len(b))
    for _ in range(iters):
        u = a / (K @ v)
        v = b / (K.T @ u)
    P = u[:, None] * K * v[None, :]
    return P, eps * np.log(u), eps * np.log(v)


def barrier_transport(C, a, b, eps):
    """``min <P, C> - eps * sum log P`` over couplings, with cvxpy."""
    import cvxpy as cp

    N, M = C.shape
    P = cp.Variable((N, M))
    obj = cp.Minimize(cp.sum(cp.multiply(C, P)) - eps * cp.sum(cp.log(P)))
    prob = cp.Problem(obj, [cp.sum(P, axis=1) == a, cp.sum(P, axis=0) == b])
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return P.value


def hybrid_cost_loops(Xt, yt, Xv, yv, c_weight=1.0, feature_weight=1.0, wt=None, wv=None):
    """Class-wise cost built entry by entry, inner distances via HiGHS."""
    Xt, Xv = np.asarray(Xt, float), np.asarray(Xv, float)
    n, m = len(Xt), len(Xv)
    wt = np.full(n, 1 / n) if wt is None else np.asarray(wt)
    wv = np.full(m, 1 / m) if wv is None else np.asarray(wv)
    inner = {}
    for a in sorted(set(yt)):
        for b in sorted(set(yv)):
            ia = [i for i in range(n) if yt[i] == a]
            ib = [j for j in range(m) if yv[j] == b]
            Cab = np.array([[np.sqrt(((Xt[i] - Xv[j]) ** 2).sum()) for j in ib] for i in ia])
            pa = wt[ia] / wt[ia].sum()
            pb = wv[ib] / wv[ib].sum()
            inner[a, b] = lp_transport(Cab, pa, pb)[0]
    C = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            C[i, j] = feature_weight * np.sqrt(((Xt[i] - Xv[j]) ** 2).sum()) + c_weight * inner[yt[i], yv[j]]
    return C, inner


def random_instance(rng, N, M, d=2, concentration=None):
    X = rng.random((N, d))
    Y = rng.random((M, d))
    C = np.sqrt(((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1))
    if concentration is None:
        a, b = np.full(N, 1 / N), np.full(M, 1 / M)
    else:
        a = rng.dirichlet(np.full(N, concentration))
        b = rng.dirichlet(np.full(M, concentration))
    return C, a, b
