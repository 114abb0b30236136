# %% [markdown]
# # Distance between labeled datasets
#
# The cost of matching a training point to a validation point is the feature
# distance plus a label term: the OT distance between the two class
# conditionals. Label noise makes matches across classes expensive.

# %%
import numpy as np

from otvaluation.corruption import mislabel
from otvaluation.dataset import duplicate_concat
from otvaluation.detect import BlobConfig, gaussian_blobs
from otvaluation.hierarchical import HybridCostConfig, dataset_distance, label_distance_table

blobs = BlobConfig(n=300, d=8, V=5)
train, valid = gaussian_blobs(blobs, seed=1)
table = label_distance_table(train, valid)
print("label distance table (rows: train classes):")
print(np.round(table.values, 2))

# %% [markdown]
# Flipping a growing share of labels pushes the distance up.

# %%
for frac in (0.0, 0.05, 0.1, 0.2, 0.4):
    noisy = train if frac == 0 else mislabel(train, frac, seed=1)[0]
    print(f"{frac:4.0%} mislabeled -> distance {dataset_distance(noisy, valid)[0]:.4f}")

# %% [markdown]
# Copying every training point k times leaves the empirical measure, and so
# the distance, unchanged.

# %%
exact = HybridCostConfig.oracle()
small_t, small_v = gaussian_blobs(BlobConfig(n=40, d=4, V=4), seed=2)
base = dataset_distance(small_t, small_v, exact)[0]
for k in (2, 3):
    print(k, abs(dataset_distance(duplicate_concat(small_t, k), small_v, exact)[0] - base))
