"""Exact transportation LP via the primal network simplex.

The basis is a spanning tree of the bipartite graph (rows 0..N-1, columns
N..N+M-1) with exactly N+M-1 cells, some possibly carrying zero flow.
Potentials are pinned by ``g[M-1] = 0``, i.e. the dual of the dropped
redundant column constraint.
"""

import math
import warnings

import numpy as np

from ..errors import InputError, InstanceTooLarge, NotConvergedWarning
from .types import SolverConfig, TransportSolution

MAX_CELLS = 1_000_000


def _initial_basis(C, a, b):
    """Least-cost start that crosses out exactly one line per allocation.

    Crossing out a single line each time keeps the N+M-1 allocated cells a
    spanning tree, including in degenerate cases.
    """
    N, M = C.shape
    supply = a.astype(float).copy()
    demand = b.astype(float).copy()
    row_alive = np.ones(N, bool)
    col_alive = np.ones(M, bool)
    rows_left, cols_left = N, M
    cells, flows = [], []
    for flat in np.argsort(C, axis=None, kind="stable"):
        i, j = divmod(int(flat), M)
        if not (row_alive[i] and col_alive[j]):
            continue
        x = min(supply[i], demand[j])
        cells.append((i, j))
        flows.append(x)
        supply[i] -= x
        demand[j] -= x
        if rows_left == 1 and cols_left == 1:
            break
        if (supply[i] <= demand[j] and rows_left > 1) or cols_left == 1:
            row_alive[i] = False
            rows_left -= 1
        else:
            col_alive[j] = False
            cols_left -= 1
    return cells, np.array(flows)


def _tree(cells, N, M):
    """BFS from the last column node: parent edge, parent node, depth, order."""
    n_nodes = N + M
    adj = [[] for _ in range(n_nodes)]
    for e, (i, j) in enumerate(cells):
        adj[i].append((N + j, e))
        adj[N + j].append((i, e))
    root = N + M - 1
    parent = [-1] * n_nodes
    pedge = [-1] * n_nodes
    depth = [-1] * n_nodes
    depth[root] = 0
    order = [root]
    for node in order:
        for nb, e in adj[node]:
            if depth[nb] < 0:
                depth[nb] = depth[node] + 1
                parent[nb] = node
                pedge[nb] = e
                order.append(nb)
    if len(order) != n_nodes:
        raise RuntimeError("basis is not a spanning tree")
    return parent, pedge, depth, order


def _potentials(C, cells, N, M, tree):
    parent, pedge, _, order = tree
    pot = np.zeros(N + M)
    for node in order[1:]:
        i, j = cells[pedge[node]]
        # u_i + v_j = C_ij on basic cells
        pot[node] = C[i, j] - pot[parent[node]]
    return pot[:N], pot[N:]


def _cycle(cells, N, tree, i_enter, j_enter):
    """Basic edges on the tree path from row ``i_enter`` to column ``j_enter``."""
    parent, pedge, depth, _ = tree
    x, y = i_enter, N + j_enter
    from_x, from_y = [], []
    while depth[x] > depth[y]:
        from_x.append(pedge[x])
        x = parent[x]
    while depth[y] > depth[x]:
        from_y.append(pedge[y])
        y = parent[y]
    while x != y:
        from_x.append(pedge[x])
        from_y.append(pedge[y])
        x, y = parent[x], parent[y]
    return from_x + from_y[::-1]


def tree_flows(cells, a, b):
    """Flows on a spanning-tree basis that meet marginals ``a`` and ``b``.

    Solved by peeling leaves; may return negative entries when the basis is
    not primal feasible for these marginals.
    """
    N, M = len(a), len(b)
    resid = np.concatenate([np.asarray(a, float), -np.asarray(b, float)])
    adj = [[] for _ in range(N + M)]
    for e, (i, j) in enumerate(cells):
        adj[i].append(e)
        adj[N + j].append(e)
    degree = [len(x) for x in adj]
    removed = [False] * len(cells)
    flows = np.zeros(len(cells))
    stack = [v for v in range(N + M) if degree[v] == 1]
    while stack:
        v = stack.pop()
        if degree[v] != 1:
            continue
        e = next(e for e in adj[v] if not removed[e])
        i, j = cells[e]
        if v < N:
            flows[e] = resid[v]
            other = N + j
            resid[other] += resid[v]
        else:
            flows[e] = -resid[v]
            other = i
            resid[other] += resid[v]
        resid[v] = 0.0
        removed[e] = True
        degree[v] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            stack.append(other)
    return flows


def solve_exact_lp(cost, cfg=None, basis=None):
    """Optimal basic solution of the transportation LP.

    Parameters
    ----------
    cost : CostMatrix
    cfg : SolverConfig, optional
        Must have ``mode="exact_lp"``; ``max_iters`` caps the pivot count.
    basis : sequence of (i, j), optional
        Warm-start tree, e.g. ``solution.basis`` from a solve on the same
        costs with different marginals. Ignored when infeasible.

    Returns
    -------
    TransportSolution
        ``basis`` holds the final tree; ``dual_g[-1] == 0``.
    """
    if cfg is None:
        cfg = SolverConfig.exact()
    if cfg.mode != "exact_lp":
        raise InputError("solve_exact_lp needs cfg.mode == 'exact_lp'")
    C = cost.values
    a, b = cost.row_measure, cost.col_measure
    N, M = C.shape
    if N * M > MAX_CELLS:
        raise InstanceTooLarge(f"{N}x{M} exceeds the exact-LP cap of {MAX_CELLS} cells")

    cells = None
    if basis is not None and len(basis) == N + M - 1:
        cand = [tuple(map(int, c)) for c in basis]
        try:
            _tree(cand, N, M)
        except RuntimeError:
            cand = None
        if cand is not None:
            fl = tree_flows(cand, a, b)
            if fl.min() >= -1e-15:
                cells, flows = cand, np.maximum(fl, 0.0)
    if cells is None:
        cells, flows = _initial_basis(C, a, b)

    scale = max(1.0, float(np.abs(C).max()))
    rc_tol = 1e-12 * scale
    max_pivots = int(cfg.max_iters) if cfg.max_iters else 10_000
    # Dantzig pricing, falling back to Bland's rule after a run of
    # degenerate pivots so the method cannot cycle.
    degenerate_run = 0
    bland = False
    pivots = 0
    converged = False
    while True:
        tree = _tree(cells, N, M)
        u, v = _potentials(C, cells, N, M, tree)
        rc = C - u[:, None] - v[None, :]
        if bland:
            neg = np.flatnonzero(rc.ravel() < -rc_tol)
            if neg.size == 0:
                converged = True
                break
            flat = int(neg[0])
        else:
            flat = int(np.argmin(rc))
            if rc.flat[flat] >= -rc_tol:
                converged = True
                break
        if pivots >= max_pivots:
            break
        ie, je = divmod(flat, M)
        path = _cycle(cells, N, tree, ie, je)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(flows[e] for e in minus)
        ties = [e for e in minus if flows[e] <= theta]
        leave = min(ties, key=lambda e: cells[e][0] * M + cells[e][1])
        for e in minus:
            flows[e] -= theta
        for e in plus:
            flows[e] += theta
        flows[leave] = 0.0
        np.maximum(flows, 0.0, out=flows)
        cells[leave] = (ie, je)
        flows[leave] = theta
        pivots += 1
        if theta > 0:
            degenerate_run = 0
            bland = False
        else:
            degenerate_run += 1
            if degenerate_run > N + M:
                bland = True

    if not converged:
        warnings.warn(f"network simplex stopped after {pivots} pivots", NotConvergedWarning)
    plan = np.zeros((N, M))
    for (i, j), x in zip(cells, flows):
        plan[i, j] = x
    objective = math.fsum(float(x) * float(C[i, j]) for (i, j), x in zip(cells, flows))
    residual = max(np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum())
    u = u + 0.0
    v = v + 0.0
    v[-1] = 0.0
    return TransportSolution(
        plan=plan,
        dual_f=u,
        dual_g=v,
        objective=objective,
        residual=float(residual),
        iterations=pivots,
        mode="exact_lp",
        epsilon=0.0,
        converged=converged,
        basis=tuple(cells),
        row_measure=a,
        col_measure=b,
    )
