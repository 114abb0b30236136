"""Corrupt, value, rank, and sweep removal budgets.

The learning-agnostic quality measure used throughout is the class-wise OT
distance to the validation set. ``distance_after_removal`` reports how that
distance moves as low-value points are dropped; it is *not* a test accuracy.
"""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from ._rng import make_rng
from .corruption import mislabel
from .dataset import LabeledDataset
from .errors import BudgetOutOfRange, InputError, KeepOutOfRange
from .hierarchical import HybridCostConfig, dataset_distance
from .valuation import ValuationReport, calibrated_gradients, stable_ranking


@dataclass(frozen=True)
class BlobConfig:
    """Isotropic Gaussian classes: ``V`` centers ``separation`` apart on average.

    Centers are random directions scaled to norm ``separation / sqrt(2)``, so
    two centers are about ``separation`` apart in high dimension. Per
    coordinate noise has std ``spread / sqrt(d)``, i.e. a typical offset of
    norm ``spread`` from the center.
    """

    n: int = 1000
    d: int = 16
    V: int = 10
    separation: float = 10.0
    spread: float = 1.0


def blob_centers(cfg, rng):
    c = rng.standard_normal((cfg.V, cfg.d))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    return c * (cfg.separation / np.sqrt(2.0))


def sample_blobs(centers, n, spread, rng):
    V, d = centers.shape
    labels = rng.permutation(np.arange(n) % V)
    x = centers[labels] + rng.standard_normal((n, d)) * (spread / np.sqrt(d))
    return LabeledDataset.uniform(x, labels, V)


def gaussian_blobs(cfg, seed, n_valid=None):
    """Training and validation draws from the same ``V`` Gaussian classes.

    Returns
    -------
    train, valid : LabeledDataset
        Balanced labels, uniform masses; ``valid`` has ``n_valid`` rows
        (default ``cfg.n``).
    """
    rng = make_rng(seed)
    centers = blob_centers(cfg, rng)
    train = sample_blobs(centers, cfg.n, cfg.spread, rng)
    valid = sample_blobs(centers, cfg.n if n_valid is None else n_valid, cfg.spread, rng)
    return train, valid


def default_budgets(n):
    """Ten evenly spaced removal budgets up to ``n // 2``."""
    half = max(1, n // 2)
    b = np.unique(np.round(np.linspace(half / 10, half, 10)).astype(int))
    return b[b >= 1]


def _check_budgets(budgets, n, allow_zero=False):
    b = np.asarray(budgets, dtype=np.int64).ravel()
    lo = 0 if allow_zero else 1
    if b.size == 0 or b.min() < lo or b.max() > n:
        raise BudgetOutOfRange(f"budgets must lie in [{lo}, {n}]")
    if np.any(np.diff(b) < 0):
        raise BudgetOutOfRange("budgets must be ascending")
    return b


@dataclass(frozen=True, eq=False)
class DetectionCurve:
    """Recall of corrupted points among the ``b`` lowest-valued, per budget."""

    budgets: np.ndarray
    rates: np.ndarray
    corruption_count: int
    seed: int = None
    config: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["budget", "rate"])
            for b, r in zip(self.budgets, self.rates):
                w.writerow([int(b), repr(float(r))])

    def to_dict(self):
        return {
            "budgets": [int(b) for b in self.budgets],
            "rates": [float(r) for r in self.rates],
            "corruption_count": self.corruption_count,
            "seed": self.seed,
            "config": self.config,
        }


def detection_curve(report, record, budgets=None, seed=None, config=None):
    """Fraction of all corrupted points found among the ``b`` lowest values."""
    ranking = np.asarray(report.ranking_train)
    n = ranking.size
    if budgets is None:
        budgets = default_budgets(n)
    b = _check_budgets(budgets, n)
    bad = record.mask(n) if record.count and record.corrupted_indices.max() < n else None
    if bad is None:
        raise InputError("record has no corrupted points within this dataset")
    hits = np.cumsum(bad[ranking])
    rates = hits[b - 1] / record.count
    return DetectionCurve(b, rates, record.count, seed, dict(config or {}))


def random_valuer(n, seed):
    """A report whose values are i.i.d. uniform; the detection baseline."""
    values = make_rng(seed).random(n)
    return ValuationReport(
        calib_grad_train=-values,
        calib_grad_valid=np.zeros(0),
        values_train=values,
        ranking_train=stable_ranking(values),
        provenance={"mode": "random", "seed": seed},
    )


def random_baseline(budgets, n):
    """Expected detection rate of a random ranking: ``b / n``."""
    return np.asarray(budgets, dtype=float) / n


def value_points(dt, dv, cfg=None):
    """Distance, solution and report for training set ``dt`` against ``dv``."""
    if cfg is None:
        cfg = HybridCostConfig()
    dist, sol, table = dataset_distance(dt, dv, cfg)
    report = calibrated_gradients(sol, {"c_weight": cfg.c_weight, "feature_weight": cfg.feature_weight})
    return dist, report


def distance_after_removal(dt, dv, report, budgets, cfg=None):
    """Class-wise distance to ``dv`` after dropping the ``b`` lowest-value points.

    Budget 0 gives the distance of the full training set. Remaining points
    get uniform masses.
    """
    if cfg is None:
        cfg = HybridCostConfig()
    b = _check_budgets(budgets, dt.n - 1, allow_zero=True)
    ranking = np.asarray(report.ranking_train)
    out = []
    for k in b:
        keep = np.sort(ranking[k:])
        sub = dt if k == 0 else dt.take(keep)
        out.append(dataset_distance(sub, dv, cfg)[0])
    return np.array(out)


def write_distance_curve(budgets, distances, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "distance"])
        for b, v in zip(budgets, distances):
            w.writerow([int(b), repr(float(v))])


def select_subset(report, keep, direction="best"):
    """Indices of the ``keep`` highest-value (``best``) or lowest-value points.

    Ties among equal values favour the lower index for ``best``; ``worst``
    takes the complement order, so best-``k`` and worst-``(n - k)`` always
    partition the index range.
    """
    values = np.asarray(report.values_train)
    n = values.size
    if not 1 <= keep <= n:
        raise KeepOutOfRange(f"keep={keep} outside [1, {n}]")
    order = np.argsort(-values, kind="stable")
    if direction == "best":
        chosen = order[:keep]
    elif direction == "worst":
        chosen = order[n - keep :]
    else:
        raise InputError(f"direction must be 'best' or 'worst', got {direction!r}")
    return np.sort(chosen)


@dataclass(frozen=True, eq=False)
class MonotonicityTable:
    fractions: np.ndarray
    seeds: tuple
    distances: np.ndarray  # seeds x fractions
    increasing: np.ndarray  # per seed, strictly increasing across fractions

    def to_dict(self):
        return {
            "fractions": [float(f) for f in self.fractions],
            "seeds": list(self.seeds),
            "distances": self.distances.tolist(),
            "strictly_increasing": [bool(v) for v in self.increasing],
        }


def monotonicity_experiment(blobs, fractions, seeds, cfg=None, n_valid=None):
    """Distance to a clean validation draw as the mislabel fraction grows.

    For every seed a fresh pair of clean training/validation draws is made;
    each fraction mislabels the training draw (fraction 0 leaves it clean).
    """
    fr = np.asarray(fractions, dtype=float)
    if np.any(np.diff(fr) < 0) or fr.min() < 0 or fr.max() > 1:
        raise InputError("fractions must be ascending within [0, 1]")
    if cfg is None:
        cfg = HybridCostConfig()
    seeds = tuple(int(s) for s in seeds)
    D = np.zeros((len(seeds), fr.size))
    for r, s in enumerate(seeds):
        dt, dv = gaussian_blobs(blobs, s, n_valid)
        for c, f in enumerate(fr):
            noisy = dt if f == 0 else mislabel(dt, float(f), s)[0]
            D[r, c] = dataset_distance(noisy, dv, cfg)[0]
    inc = np.all(np.diff(D, axis=1) > 0, axis=1)
    return MonotonicityTable(fr, seeds, D, inc)


def config_echo(cfg):
    """JSON-ready description of a :class:`HybridCostConfig`."""
    d = asdict(cfg)
    return json.loads(json.dumps(d, default=str))


def run_report(**entries):
    """Run-report dictionary stamped with the package version."""
    return {"version": f"otvaluation {__version__}", **entries}
