"""Class-wise hybrid cost and the dataset distance built on it.

The ground cost between a training pair ``(x, y)`` and a validation pair
``(x', y')`` is

    C = feature_weight * ||x - x'|| + c_weight * W(mu_t(. | y), mu_v(. | y'))

where the second term is the OT distance between the two per-label
conditional feature distributions. The dataset distance is the OT value of
the outer problem under ``C``.
"""

import hashlib
import json
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import LabeledDataset
from .errors import DimensionMismatch, InputError, MissingLabelPolicyViolation
from .ot import CostMatrix, SolverConfig, euclidean_cost, solve

POLICIES = ("error", "impute_max")
_ROW_BLOCK = 1 << 22


@dataclass(frozen=True, eq=False)
class LabelDistanceTable:
    """``values[a, b]`` = OT distance between train class ``a`` and valid class ``b``.

    Entries for labels absent from either side are NaN unless a missing-label
    policy filled them.
    """

    values: np.ndarray
    present_train: np.ndarray
    present_valid: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def to_dict(self):
        V_t, V_v = self.values.shape
        return {
            "V_t": V_t,
            "V_v": V_v,
            "values": [None if not np.isfinite(x) else float(x) for x in self.values.ravel()],
            "present_train": [bool(x) for x in self.present_train],
            "present_valid": [bool(x) for x in self.present_valid],
        }

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class HybridCostConfig:
    c_weight: float = 1.0
    feature_weight: float = 1.0
    inner: SolverConfig = field(default_factory=SolverConfig)
    outer: SolverConfig = field(default_factory=SolverConfig)
    squared: bool = False
    missing_label_policy: str = "error"

    def __post_init__(self):
        if self.c_weight < 0 or self.feature_weight < 0:
            raise InputError("weights must be non-negative")
        if self.c_weight == 0 and self.feature_weight == 0:
            raise InputError("at least one of c_weight, feature_weight must be positive")
        if self.missing_label_policy not in POLICIES:
            raise InputError(f"unknown missing-label policy {self.missing_label_policy!r}")

    @classmethod
    def oracle(cls, **kw):
        """Exact LP for both the label table and the outer problem."""
        return cls(inner=SolverConfig.exact(), outer=SolverConfig.exact(), **kw)


def conditional_measures(ds):
    """Per-label sub-datasets keyed by label id, masses renormalized to 1.

    Labels carrying zero total mass are left out (absent).
    """
    out = {}
    totals = np.bincount(ds.labels, weights=ds.masses, minlength=ds.label_universe)
    for y in np.flatnonzero(totals > 0):
        rows = np.flatnonzero(ds.labels == y)
        w = ds.masses[rows] / totals[y]
        w = w / w.sum()
        out[int(y)] = LabeledDataset(ds.features[rows], ds.labels[rows], w, ds.label_universe)
    return out


def _threads():
    try:
        return max(1, int(os.environ.get("LAVA_THREADS", "1")))
    except ValueError:
        return 1


def _digest(ds):
    h = hashlib.sha1()
    for arr in (ds.features, ds.labels, ds.masses):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(str(ds.label_universe).encode())
    return h.hexdigest()


_cache = OrderedDict()
_CACHE_SIZE = 16


def label_distance_table(dt, dv, inner_cfg=None, squared=False, policy="error"):
    """OT distances between every pair of present train/valid conditionals.

    Entries are independent inner solves; up to ``LAVA_THREADS`` of them run
    concurrently. Results are memoized on dataset contents and settings.

    With ``policy="error"`` the two datasets must carry the same label set.
    ``"impute_max"`` fills rows/columns of labels absent from one side with
    the largest finite entry.
    """
    if inner_cfg is None:
        inner_cfg = SolverConfig()
    if policy not in POLICIES:
        raise InputError(f"unknown missing-label policy {policy!r}")
    if dt.d != dv.d:
        raise DimensionMismatch(f"feature dimensions differ: {dt.d} vs {dv.d}")
    key = (_digest(dt), _digest(dv), inner_cfg, squared, policy)
    if key in _cache:
        _cache.move_to_end(key)
        return _cache[key]

    ct, cv = conditional_measures(dt), conditional_measures(dv)
    if policy == "error" and set(ct) != set(cv):
        only_t = sorted(set(ct) - set(cv))
        only_v = sorted(set(cv) - set(ct))
        raise MissingLabelPolicyViolation(
            f"labels present on one side only (train-only {only_t}, valid-only {only_v})"
        )
    V_t, V_v = dt.label_universe, dv.label_universe
    values = np.full((V_t, V_v), np.nan)
    pairs = [(a, b) for a in ct for b in cv]

    def entry(pair):
        a, b = pair
        A, B = ct[a], cv[b]
        cost = euclidean_cost(A.features, B.features, A.masses, B.masses, squared=squared)
        return solve(cost, inner_cfg).objective

    workers = min(_threads(), len(pairs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(entry, pairs))
    else:
        results = [entry(p) for p in pairs]
    for (a, b), val in zip(pairs, results):
        values[a, b] = max(val, 0.0)

    present_t = np.zeros(V_t, bool)
    present_t[list(ct)] = True
    present_v = np.zeros(V_v, bool)
    present_v[list(cv)] = True
    if policy == "impute_max":
        finite = values[np.isfinite(values)]
        values[~np.isfinite(values)] = finite.max() if finite.size else 0.0
    values.flags.writeable = False
    table = LabelDistanceTable(values, present_t, present_v)
    _cache[key] = table
    if len(_cache) > _CACHE_SIZE:
        _cache.popitem(last=False)
    return table


def hybrid_cost(dt, dv, table, cfg=None):
    """``C_ij = feature_weight * d(x_i, x'_j) + c_weight * table[y_i, y'_j]``."""
    if cfg is None:
        cfg = HybridCostConfig()
    if dt.d != dv.d:
        raise DimensionMismatch(f"feature dimensions differ: {dt.d} vs {dv.d}")
    T = np.asarray(table.values)
    yt, yv = dt.labels, dv.labels
    if cfg.c_weight > 0:
        need = T[np.unique(yt)][:, np.unique(yv)]
        if not np.isfinite(need).all():
            raise MissingLabelPolicyViolation("label table lacks entries needed by these datasets")
    C = cdist(dt.features, dv.features, "sqeuclidean" if cfg.squared else "euclidean")
    if cfg.feature_weight != 1.0:
        C *= cfg.feature_weight
    if cfg.c_weight > 0:
        T_cols = cfg.c_weight * T[:, yv]
        step = max(1, _ROW_BLOCK // max(1, dv.n))
        for s in range(0, dt.n, step):
            C[s : s + step] += T_cols[yt[s : s + step]]
    return CostMatrix(C, dt.masses, dv.masses)


def dataset_distance(dt, dv, cfg=None, table=None):
    """Class-wise OT distance between a training and a validation set.

    Returns
    -------
    distance : float
        Transport cost of the outer solution.
    solution : TransportSolution
    table : LabelDistanceTable
    """
    if cfg is None:
        cfg = HybridCostConfig()
    if table is None:
        table = label_distance_table(dt, dv, cfg.inner, cfg.squared, cfg.missing_label_policy)
    cost = hybrid_cost(dt, dv, table, cfg)
    sol = solve(cost, cfg.outer)
    return sol.objective, sol, table
