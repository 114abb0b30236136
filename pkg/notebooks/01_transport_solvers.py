# %% [markdown]
# # Three ways to move mass
#
# Two small point clouds, one cost matrix, three solvers: the exact network
# simplex, log-domain Sinkhorn, and the log-barrier Newton method. As the
# regularization weight shrinks, the regularized plans approach the exact one.

# %%
import numpy as np

from otvaluation.ot import SolverConfig, euclidean_cost, solve

rng = np.random.default_rng(0)
cost = euclidean_cost(rng.random((12, 2)), rng.random((9, 2)))
exact = solve(cost, SolverConfig.exact())
print(f"exact distance {exact.objective:.6f}, {exact.iterations} pivots")

# %% [markdown]
# Shrinking epsilon. Sinkhorn's objective is the transport cost of its plan,
# so it sits above the exact value and closes the gap.

# %%
for eps in (1e-1, 1e-2, 1e-3):
    sk = solve(cost, SolverConfig(epsilon=eps))
    lb = solve(cost, SolverConfig(epsilon=eps, mode="log_barrier"))
    print(
        f"eps={eps:g}: sinkhorn {sk.objective:.6f} ({sk.iterations} it), "
        f"barrier {float((lb.plan * cost.values).sum()):.6f}"
    )

# %% [markdown]
# The barrier plan is strictly positive everywhere, while the exact plan is a
# spanning tree with at most N + M - 1 nonzero cells.

# %%
lb = solve(cost, SolverConfig(epsilon=1e-3, mode="log_barrier"))
print("exact nonzeros:", int((exact.plan > 0).sum()), "of", exact.plan.size)
print("barrier min entry:", lb.plan.min())
