import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import DimensionMismatch, InputError, NonFiniteCost

MODES = ("sinkhorn", "exact_lp", "log_barrier")
DEFAULT_TOL = {"sinkhorn": 1e-6, "exact_lp": 1e-9, "log_barrier": 1e-9}


def _as_measure(w, n, name):
    if w is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {w.shape}, expected ({n},)")
    if np.any(~(w >= 0)) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise InputError(f"{name} must be non-negative and sum to 1")
    return w


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Ground cost between two discrete measures.

    ``values[i, j]`` is the cost of moving mass from row point ``i`` to
    column point ``j``; measures default to uniform.
    """

    values: np.ndarray
    row_measure: np.ndarray = None
    col_measure: np.ndarray = None

    def __post_init__(self):
        C = np.asarray(self.values, dtype=float)
        if C.ndim != 2 or min(C.shape) < 1:
            raise DimensionMismatch(f"cost must be a non-empty matrix, got shape {C.shape}")
        if not np.isfinite(C).all():
            raise NonFiniteCost("cost matrix has non-finite entries")
        if C.min() < 0:
            raise InputError("cost entries must be non-negative")
        object.__setattr__(self, "values", C)
        object.__setattr__(self, "row_measure", _as_measure(self.row_measure, C.shape[0], "row_measure"))
        object.__setattr__(self, "col_measure", _as_measure(self.col_measure, C.shape[1], "col_measure"))

    @property
    def shape(self):
        return self.values.shape

    def with_measures(self, row_measure=None, col_measure=None):
        return CostMatrix(
            self.values,
            self.row_measure if row_measure is None else row_measure,
            self.col_measure if col_measure is None else col_measure,
        )

    def transpose(self):
        return CostMatrix(self.values.T, self.col_measure, self.row_measure)

    def scaled(self, s):
        return CostMatrix(self.values * s, self.row_measure, self.col_measure)


def euclidean_cost(A, B, row_measure=None, col_measure=None, squared=False):
    """Pairwise Euclidean distances ``||A_i - B_j||`` (or their squares).

    Distances are evaluated per pair, so ``A == B`` gives an exactly zero
    diagonal and an exactly symmetric matrix.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    D = cdist(A, B, "sqeuclidean" if squared else "euclidean")
    return CostMatrix(D, row_measure, col_measure)


@dataclass(frozen=True)
class SolverConfig:
    """Solver selection and stopping rule.

    ``tol`` bounds the L1 marginal residual; when left as ``None`` it takes
    the per-mode default (1e-6 for Sinkhorn, 1e-9 otherwise).
    ``eps_scaling`` lets the entropic solvers warm-start from a larger
    regularization and anneal down to ``epsilon``.
    """

    epsilon: float = 0.1
    max_iters: int = 10_000
    tol: float = None
    mode: str = "sinkhorn"
    eps_scaling: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown solver mode {self.mode!r}")
        if self.mode == "exact_lp":
            if self.epsilon not in (0, 0.0, None):
                raise InputError("exact_lp requires epsilon = 0")
            object.__setattr__(self, "epsilon", 0.0)
        elif not (self.epsilon is not None and self.epsilon > 0):
            raise InputError(f"{self.mode} requires epsilon > 0")
        if self.tol is None:
            object.__setattr__(self, "tol", DEFAULT_TOL[self.mode])
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if int(self.max_iters) < 1:
            raise InputError("max_iters must be >= 1")

    @classmethod
    def exact(cls, **kw):
        return cls(epsilon=0.0, mode="exact_lp", **kw)


@dataclass(frozen=True, eq=False)
class TransportSolution:
    """Primal plan, dual potentials and solver metadata.

    Duals follow the usual sign convention ``f_i + g_j <= C_ij`` (equality on
    the support for the exact LP) and are gauged so that ``dual_g[-1] == 0``.
    """

    plan: np.ndarray
    dual_f: np.ndarray
    dual_g: np.ndarray
    objective: float
    residual: float
    iterations: int
    mode: str
    epsilon: float
    converged: bool = True
    basis: tuple = field(default=None, repr=False)
    row_measure: np.ndarray = field(default=None, repr=False)
    col_measure: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "objective": float(self.objective),
            "residual": float(self.residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "mode": self.mode,
            "epsilon": float(self.epsilon),
            "dual_f": [float(v) for v in self.dual_f],
            "dual_g": [float(v) for v in self.dual_g],
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def write_plan_csv(self, path):
        if self.plan.size > 1_000_000:
            raise InputError("plan dump limited to N*M <= 1e6")
        np.savetxt(path, self.plan, delimiter=",", fmt="%.17g")


def marginal_residual(plan, a, b):
    """max of the L1 row- and column-marginal errors."""
    return max(np.abs(plan.sum(axis=1) - a).sum(), np.abs(plan.sum(axis=0) - b).sum())


def regauge(f, g):
    """Shift ``(f, g) -> (f + g[-1], g - g[-1])`` so the last column dual is zero."""
    shift = g[-1]
    f = f + shift
    g = g - shift
    g[-1] = 0.0
    return f, g
