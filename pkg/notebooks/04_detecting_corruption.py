# %% [markdown]
# # Finding corrupted points
#
# Corrupt a quarter of a clean training set, value every point against a clean
# validation set, and check how many corrupted points appear among the lowest
# values. A random ranking finds b/n of them at budget b.

# %%
from otvaluation.corruption import feature_noise, mislabel
from otvaluation.detect import (
    BlobConfig,
    detection_curve,
    distance_after_removal,
    gaussian_blobs,
    random_baseline,
    value_points,
)

train, valid = gaussian_blobs(BlobConfig(n=400, d=16, V=10), seed=5)
for name, corrupt in (("mislabel", mislabel), ("feature noise", feature_noise)):
    noisy, record = corrupt(train, 0.25, seed=5)
    _, report = value_points(noisy, valid)
    curve = detection_curve(report, record, budgets=[25, 50, 100, 200])
    base = random_baseline(curve.budgets, noisy.n)
    print(name)
    for b, r, rb in zip(curve.budgets, curve.rates, base):
        print(f"  budget {b:3d}: found {r:.0%} of corrupted points (random {rb:.0%})")

# %% [markdown]
# Dropping the lowest-valued points brings the training set closer to the
# validation set.

# %%
noisy, record = mislabel(train, 0.25, seed=5)
_, report = value_points(noisy, valid)
budgets = [0, 50, 100]
for b, d in zip(budgets, distance_after_removal(noisy, valid, report, budgets)):
    print(f"removed {b:3d}: distance {d:.4f}")
