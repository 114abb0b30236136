"""Labeled datasets as discrete measures, plus CSV/JSON serialization.

CSV layout: a header ``f0,...,f{d-1},label[,mass]`` followed by one row per
point, UTF-8, ``.`` as decimal separator.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .errors import (
    EmptyDataset,
    InputError,
    KTooLarge,
    MalformedHeader,
    MassSumMismatch,
    NegativeMass,
    NonFiniteFeature,
)

MASS_SUM_TOL = 1e-12


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class DatasetManifest:
    source: str
    n: int
    d: int
    V: int
    checksum: str
    mass_policy: str

    def to_dict(self):
        return {
            "source": self.source,
            "n": self.n,
            "d": self.d,
            "V": self.V,
            "checksum": self.checksum,
            "mass_policy": self.mass_policy,
        }


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features, integer labels and point masses of an empirical measure.

    Arrays are copied and made read-only on construction.
    """

    features: np.ndarray
    labels: np.ndarray
    masses: np.ndarray
    label_universe: int = None
    manifest: DatasetManifest = field(default=None, compare=False)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise EmptyDataset(f"need an n x d feature matrix with n, d >= 1, got shape {x.shape}")
        bad = ~np.isfinite(x).all(axis=1)
        if bad.any():
            raise NonFiniteFeature(int(np.flatnonzero(bad)[0]))
        y = np.asarray(self.labels)
        if y.shape != (x.shape[0],):
            raise InputError("labels must be a vector with one entry per row")
        if y.size and (y.min() < 0 or not np.all(y == np.round(y))):
            raise InputError("labels must be non-negative integers")
        y = y.astype(np.int64)
        w = np.asarray(self.masses, dtype=float)
        if w.shape != (x.shape[0],):
            raise InputError("masses must be a vector with one entry per row")
        neg = np.flatnonzero(~(w >= 0))
        if neg.size:
            raise NegativeMass(int(neg[0]))
        total = math.fsum(w)
        if abs(total - 1.0) > MASS_SUM_TOL:
            raise MassSumMismatch(f"masses sum to {total!r}, expected 1")
        V = self.label_universe
        if V is None:
            V = int(y.max()) + 1
        if y.max() >= V:
            raise InputError(f"label {int(y.max())} outside label universe of size {V}")
        object.__setattr__(self, "features", _frozen(x, float))
        object.__setattr__(self, "labels", _frozen(y, np.int64))
        object.__setattr__(self, "masses", _frozen(w, float))
        object.__setattr__(self, "label_universe", int(V))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @classmethod
    def uniform(cls, features, labels, label_universe=None):
        n = np.asarray(features).shape[0]
        return cls(features, labels, np.full(n, 1.0 / n), label_universe)

    def take(self, indices, uniform=True):
        """Rows ``indices`` as a new dataset; masses re-uniformized unless ``uniform=False``."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EmptyDataset("cannot take an empty set of rows")
        if uniform:
            w = np.full(idx.size, 1.0 / idx.size)
        else:
            w = self.masses[idx] / math.fsum(self.masses[idx])
        return LabeledDataset(self.features[idx], self.labels[idx], w, self.label_universe)

    def with_masses(self, masses):
        return LabeledDataset(self.features, self.labels, masses, self.label_universe)

    def present_labels(self):
        """Sorted label ids carrying positive mass."""
        mass = np.bincount(self.labels, weights=self.masses, minlength=self.label_universe)
        return np.flatnonzero(mass > 0)


def _expected_header(d, with_mass):
    cols = [f"f{k}" for k in range(d)] + ["label"]
    return cols + ["mass"] if with_mass else cols


def load_csv(path, mass_policy="uniform", label_universe=None):
    """Read a dataset from CSV.

    Parameters
    ----------
    path : str or Path
    mass_policy : {"uniform", "column"}
        ``uniform`` assigns 1/n to every row (a ``mass`` column, if present,
        is ignored); ``column`` reads masses from the ``mass`` column.
    label_universe : int, optional
        Defaults to ``max(label) + 1``.
    """
    if mass_policy not in ("uniform", "column"):
        raise InputError(f"unknown mass policy {mass_policy!r}")
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8")
    reader = csv.reader(text.splitlines())
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedHeader("file is empty") from None
    has_mass = bool(header) and header[-1] == "mass"
    d = len(header) - 1 - int(has_mass)
    if d < 1 or header != _expected_header(d, has_mass):
        raise MalformedHeader(f"expected header f0..f{{d-1}},label[,mass], got {header}")
    if mass_policy == "column" and not has_mass:
        raise MalformedHeader("mass_policy='column' needs a 'mass' column")

    feats, labels, masses = [], [], []
    for row_no, row in enumerate(reader):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise InputError(f"row {row_no} has {len(row)} fields, expected {len(header)}")
        try:
            x = [float(c) for c in row[:d]]
            lab = row[d].strip()
            y = int(lab)
            m = float(row[d + 1]) if has_mass else None
        except ValueError as exc:
            raise InputError(f"row {row_no} does not parse: {exc}") from None
        if not all(math.isfinite(v) for v in x):
            raise NonFiniteFeature(row_no)
        if y < 0:
            raise InputError(f"row {row_no} has negative label {y}")
        if mass_policy == "column":
            if not m >= 0:
                raise NegativeMass(row_no)
            masses.append(m)
        feats.append(x)
        labels.append(y)
    n = len(feats)
    if n == 0:
        raise EmptyDataset(f"{path} has no data rows")
    if mass_policy == "uniform":
        w = np.full(n, 1.0 / n)
    else:
        w = np.array(masses)
        total = math.fsum(w)
        if abs(total - 1.0) > MASS_SUM_TOL:
            raise MassSumMismatch(f"mass column sums to {total!r}, expected 1")
    y = np.array(labels, dtype=np.int64)
    V = int(y.max()) + 1 if label_universe is None else int(label_universe)
    manifest = DatasetManifest(
        source=str(path),
        n=n,
        d=d,
        V=V,
        checksum=hashlib.sha256(raw).hexdigest(),
        mass_policy=mass_policy,
    )
    return LabeledDataset(np.array(feats, dtype=float).reshape(n, d), y, w, V, manifest)


def write_csv(ds, path, include_mass=True):
    """Write ``ds`` so that ``load_csv`` recovers identical arrays.

    Floats are written with ``repr``, which round-trips exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_expected_header(ds.d, include_mass))
        for k in range(ds.n):
            row = [repr(float(v)) for v in ds.features[k]] + [str(int(ds.labels[k]))]
            if include_mass:
                row.append(repr(float(ds.masses[k])))
            w.writerow(row)
    return path


def write_manifest(manifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")


def subsample(ds, k, seed):
    """``k`` rows drawn without replacement, with uniform masses 1/k."""
    if not 1 <= k <= ds.n:
        raise KTooLarge(f"k={k} outside [1, {ds.n}]")
    idx = make_rng(seed).choice(ds.n, size=k, replace=False)
    return ds.take(idx)


def duplicate_concat(ds, times):
    """Stack ``times`` copies of ``ds`` with masses divided by ``times``.

    The implied measure is unchanged.
    """
    times = int(times)
    if times < 1:
        raise InputError("times must be >= 1")
    if times == 1:
        return ds
    return LabeledDataset(
        np.tile(ds.features, (times, 1)),
        np.tile(ds.labels, times),
        np.tile(ds.masses, times) / times,
        ds.label_universe,
    )
