"""Seeded corruption generators with ground-truth records.

Each generator is a pure function of its inputs and seed. Rows that are not
selected come back bit-identical, and the returned record lists exactly the
corrupted row indices.

Random selections are nested: for a fixed seed, the rows corrupted at a
smaller fraction are a subset of those corrupted at a larger one.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .dataset import LabeledDataset
from .errors import (
    BadPatchCoord,
    DimensionMismatch,
    InputError,
    NotEnoughBaseRows,
    SingleClassDataset,
)

KINDS = ("mislabel", "feature_noise", "backdoor_trigger", "feature_collision", "irrelevant_injection")


@dataclass(frozen=True, eq=False)
class CorruptionRecord:
    kind: str
    seed: int
    params: dict = field(default_factory=dict)
    corrupted_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown corruption kind {self.kind!r}")
        idx = np.unique(np.asarray(self.corrupted_indices, dtype=np.int64))
        idx.flags.writeable = False
        object.__setattr__(self, "corrupted_indices", idx)

    @property
    def count(self):
        return int(self.corrupted_indices.size)

    def mask(self, n):
        m = np.zeros(n, bool)
        m[self.corrupted_indices] = True
        return m

    def to_dict(self):
        return {
            "kind": self.kind,
            "seed": self.seed,
            "params": self.params,
            "corrupted_indices": [int(i) for i in self.corrupted_indices],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(data["kind"], data["seed"], dict(data.get("params", {})), data["corrupted_indices"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"malformed corruption record: {exc}") from None

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)


def corrupted_count(fraction, n):
    """``round(fraction * n)`` with halves rounded up."""
    if not 0 < fraction <= 1:
        raise InputError(f"fraction must lie in (0, 1], got {fraction!r}")
    return int(math.floor(fraction * n + 0.5))


def _selection(rng, n, k):
    # a full permutation, so smaller k picks a prefix of larger k
    return rng.permutation(n)[:k]


def _rebuild(ds, features=None, labels=None):
    return LabeledDataset(
        ds.features if features is None else features,
        ds.labels if labels is None else labels,
        ds.masses,
        ds.label_universe,
    )


def mislabel(ds, fraction, seed):
    """Give ``round(fraction * n)`` random rows a different, uniformly drawn label."""
    V = ds.label_universe
    if V < 2:
        raise SingleClassDataset("mislabeling needs at least two label ids")
    k = corrupted_count(fraction, ds.n)
    rng = make_rng(seed)
    sel = _selection(rng, ds.n, k)
    offsets = rng.integers(1, V, size=ds.n)
    y = ds.labels.copy()
    y[sel] = (y[sel] + offsets[:k]) % V
    rec = CorruptionRecord("mislabel", seed, {"fraction": fraction}, sel)
    return _rebuild(ds, labels=y), rec


def feature_noise(ds, fraction, sigma_scale=1.0, seed=0):
    """Add Gaussian noise to ``round(fraction * n)`` random rows.

    The noise in column ``c`` has standard deviation
    ``sigma_scale * std(ds.features[:, c])``. Labels are untouched.
    """
    if not sigma_scale >= 0:
        raise InputError("sigma_scale must be non-negative")
    k = corrupted_count(fraction, ds.n)
    rng = make_rng(seed)
    sel = _selection(rng, ds.n, k)
    sigma = sigma_scale * ds.features.std(axis=0)
    noise = rng.standard_normal((ds.n, ds.d))[:k] * sigma
    x = ds.features.copy()
    x[sel] += noise
    rec = CorruptionRecord("feature_noise", seed, {"fraction": fraction, "sigma_scale": sigma_scale}, sel)
    return _rebuild(ds, features=x), rec


def backdoor_trigger(ds, fraction, target_label, patch_coords, patch_value, seed):
    """Stamp a coordinate patch on random rows and relabel them as ``target_label``."""
    coords = np.asarray(sorted(set(int(c) for c in patch_coords)), dtype=np.int64)
    if coords.size and (coords[0] < 0 or coords[-1] >= ds.d):
        raise BadPatchCoord(f"patch coordinates must lie in [0, {ds.d})")
    if not 0 <= target_label < ds.label_universe:
        raise InputError(f"target label {target_label} outside [0, {ds.label_universe})")
    k = corrupted_count(fraction, ds.n)
    sel = _selection(make_rng(seed), ds.n, k)
    x = ds.features.copy()
    y = ds.labels.copy()
    if coords.size:
        x[np.ix_(sel, coords)] = patch_value
    y[sel] = target_label
    params = {
        "fraction": fraction,
        "target_label": int(target_label),
        "patch_coords": coords.tolist(),
        "patch_value": float(patch_value),
    }
    return _rebuild(ds, x, y), CorruptionRecord("backdoor_trigger", seed, params, sel)


def feature_collision(ds, count, base_label, blend_source, alpha, seed=None):
    """Blend ``count`` rows of class ``base_label`` toward ``blend_source``.

    Each chosen row becomes ``(1 - alpha) * x + alpha * blend_source``; labels
    are kept. Without a seed the first ``count`` rows of the class are used,
    otherwise they are drawn at random.
    """
    src = np.asarray(blend_source, dtype=float).ravel()
    if src.size != ds.d:
        raise DimensionMismatch(f"blend source has dimension {src.size}, expected {ds.d}")
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    base_rows = np.flatnonzero(ds.labels == base_label)
    count = int(count)
    if count < 0 or base_rows.size < count:
        raise NotEnoughBaseRows(f"{base_rows.size} rows carry label {base_label}, {count} requested")
    sel = base_rows[:count] if seed is None else make_rng(seed).choice(base_rows, size=count, replace=False)
    x = ds.features.copy()
    x[sel] = (1 - alpha) * x[sel] + alpha * src
    params = {"count": count, "base_label": int(base_label), "alpha": float(alpha), "blend_source": src.tolist()}
    return _rebuild(ds, features=x), CorruptionRecord("feature_collision", seed, params, sel)


def irrelevant_injection(ds, donor, per_class_counts, seed=None):
    """Append donor rows under the given receiving labels.

    ``per_class_counts`` maps receiving label to row count. Donor rows are
    consumed in order, or in a seeded random order when ``seed`` is given.
    Masses of the result are uniform over the enlarged dataset.
    """
    if donor.d != ds.d:
        raise DimensionMismatch(f"donor dimension {donor.d} differs from {ds.d}")
    counts = {int(k): int(v) for k, v in dict(per_class_counts).items()}
    for lab, c in counts.items():
        if c < 0:
            raise InputError("per-class counts must be non-negative")
        if not 0 <= lab < ds.label_universe:
            raise InputError(f"receiving label {lab} outside [0, {ds.label_universe})")
    total = sum(counts.values())
    if total > donor.n:
        raise InputError(f"donor has {donor.n} rows, {total} requested")
    params = {"per_class_counts": {str(k): v for k, v in sorted(counts.items())}}
    if total == 0:
        return ds, CorruptionRecord("irrelevant_injection", seed, params, [])
    order = np.arange(donor.n) if seed is None else make_rng(seed).permutation(donor.n)
    rows = order[:total]
    new_labels = np.concatenate([np.full(c, lab, np.int64) for lab, c in sorted(counts.items())])
    n = ds.n + total
    out = LabeledDataset(
        np.vstack([ds.features, donor.features[rows]]),
        np.concatenate([ds.labels, new_labels]),
        np.full(n, 1.0 / n),
        ds.label_universe,
    )
    return out, CorruptionRecord("irrelevant_injection", seed, params, np.arange(ds.n, n))
