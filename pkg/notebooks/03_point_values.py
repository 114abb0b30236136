# %% [markdown]
# # Values from dual potentials
#
# Each training point's dual potential says how the distance reacts when mass
# moves onto it. Centering the potentials (so moving mass is balanced by the
# other points) gives the calibrated gradient; its negation is the point's
# value. Points that raise the distance get low values.

# %%
import numpy as np

from otvaluation.dataset import LabeledDataset
from otvaluation.detect import BlobConfig, gaussian_blobs, value_points
from otvaluation.ot import euclidean_cost, solve_exact_lp
from otvaluation.valuation import calibrated_gradients, empirical_radius, predict_delta, shifted_measure

train, valid = gaussian_blobs(BlobConfig(n=200, d=8, V=5), seed=3)
features = train.features.copy()
features[:5] += 8.0  # five points pushed far from every class

shifted = LabeledDataset.uniform(features, train.labels, train.label_universe)
dist, report = value_points(shifted, valid)
print(f"distance {dist:.3f}; values sum to {report.values_train.sum():.1e}")
print("ten lowest-valued points:", report.ranking_train[:10].tolist())

# %% [markdown]
# The first-order prediction of how the distance changes is exact over a
# range of mass shifts, as long as the optimal basis does not change.

# %%
rng = np.random.default_rng(4)
X, Y = rng.random((10, 2)), rng.random((9, 2))
cost = euclidean_cost(X, Y)
base = solve_exact_lp(cost)
rep = calibrated_gradients(base)
neg, pos = empirical_radius(cost, index=0)
print(f"radius for point 0: remove up to {-neg:.0%}, add up to {pos:.0%} of its mass")
delta = 0.5 * pos * cost.row_measure[0]
moved = solve_exact_lp(cost.with_measures(row_measure=shifted_measure(cost.row_measure, 0, delta)))
print("predicted", predict_delta(rep, 0, "train", delta), "actual", moved.objective - base.objective)
