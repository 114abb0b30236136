"""Calibrated gradients of the OT distance and checks built on them.

The calibrated gradient of point ``i`` on a side with ``N`` points is

    f_i - sum_{j != i} f_j / (N - 1)  =  N / (N - 1) * (f_i - mean(f)),

the rate of change of the OT value when mass moves onto point ``i`` and is
taken evenly from the others. A point's value is its negated gradient.
"""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from ._rng import make_rng
from .errors import (
    DegenerateDuals,
    DegenerateSizeWarning,
    InputError,
    InstanceTooLarge,
    MassWouldGoNegative,
    NotConverged,
)
from .ot import CostMatrix, SolverConfig, solve, solve_exact_lp, solve_log_barrier

SIDES = ("train", "valid")


def calibrate(duals):
    """Mean-centered, rescaled duals; zeros when there is a single point."""
    f = np.asarray(duals, dtype=float)
    n = f.size
    if n < 2:
        return np.zeros(n)
    return (n / (n - 1)) * (f - f.mean())


@dataclass(frozen=True, eq=False)
class ValuationReport:
    calib_grad_train: np.ndarray
    calib_grad_valid: np.ndarray
    values_train: np.ndarray
    ranking_train: np.ndarray
    provenance: dict = field(default_factory=dict)
    masses_train: np.ndarray = field(default=None, repr=False)
    masses_valid: np.ndarray = field(default=None, repr=False)
    degenerate: bool = False

    @property
    def values_valid(self):
        return -self.calib_grad_valid

    def gradients(self, side):
        if side not in SIDES:
            raise InputError(f"side must be one of {SIDES}")
        return self.calib_grad_train if side == "train" else self.calib_grad_valid

    def masses(self, side):
        return self.masses_train if side == "train" else self.masses_valid

    def to_dict(self):
        return {
            "provenance": self.provenance,
            "degenerate": self.degenerate,
            "calib_grad_train": self.calib_grad_train.tolist(),
            "calib_grad_valid": self.calib_grad_valid.tolist(),
            "values_train": self.values_train.tolist(),
            "ranking_train": self.ranking_train.tolist(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def to_csv(self, path):
        """Training-side rows ``index,value,calibrated_gradient,rank`` in rank order."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "value", "calibrated_gradient", "rank"])
            for rank, i in enumerate(self.ranking_train):
                w.writerow([int(i), repr(float(self.values_train[i])), repr(float(self.calib_grad_train[i])), rank])


def stable_ranking(values):
    """Ascending order of ``values``; ties keep original index order."""
    return np.argsort(np.asarray(values), kind="stable")


def calibrated_gradients(sol, extra_provenance=None):
    """Turn a solution's dual potentials into a :class:`ValuationReport`.

    A side with a single point gets a zero gradient and a
    ``DegenerateSizeWarning``, since the ``N - 1`` denominator is undefined.
    """
    f, g = np.asarray(sol.dual_f, float), np.asarray(sol.dual_g, float)
    degenerate = f.size < 2 or g.size < 2
    if degenerate:
        warnings.warn("calibrated gradient undefined for a single point; reporting 0", DegenerateSizeWarning)
    grad_t = calibrate(f)
    grad_v = calibrate(g)
    values = -grad_t
    prov = {
        "mode": sol.mode,
        "epsilon": float(sol.epsilon),
        "distance": float(sol.objective),
        "residual": float(sol.residual),
        "converged": bool(sol.converged),
    }
    if extra_provenance:
        prov.update(extra_provenance)
    masses_t = sol.row_measure if sol.row_measure is not None else sol.plan.sum(axis=1)
    masses_v = sol.col_measure if sol.col_measure is not None else sol.plan.sum(axis=0)
    return ValuationReport(
        calib_grad_train=grad_t,
        calib_grad_valid=grad_v,
        values_train=values,
        ranking_train=stable_ranking(values),
        provenance=prov,
        masses_train=np.asarray(masses_t, float),
        masses_valid=np.asarray(masses_v, float),
        degenerate=degenerate,
    )


def shifted_measure(masses, index, delta_mass):
    """Add ``delta_mass`` to point ``index`` and take it evenly from the rest."""
    w = np.array(masses, dtype=float)
    n = w.size
    if n < 2:
        raise InputError("mass can only be shifted between at least two points")
    others = -delta_mass / (n - 1)
    w += others
    w[index] = masses[index] + delta_mass
    if w[index] < 0 or np.delete(w, index).min() < -1e-15:
        raise MassWouldGoNegative(f"shifting {delta_mass!r} onto point {index} makes a mass negative")
    return np.maximum(w, 0.0)


def predict_delta(report, index, side, delta_mass):
    """First-order change of the OT distance for a calibrated mass shift."""
    grads = report.gradients(side)
    masses = report.masses(side)
    if not 0 <= index < grads.size:
        raise InputError(f"index {index} out of range")
    if delta_mass == 0:
        return 0.0
    if masses is not None:
        n = masses.size
        if masses[index] + delta_mass < 0:
            raise MassWouldGoNegative(f"point {index} has mass {masses[index]!r}")
        if n > 1 and delta_mass > 0 and np.delete(masses, index).min() - delta_mass / (n - 1) < -1e-15:
            raise MassWouldGoNegative("the shift would drive another point's mass negative")
    return float(delta_mass * grads[index])


def _perturbed_cost(cost, side, index, delta_mass):
    if side == "train":
        return cost.with_measures(row_measure=shifted_measure(cost.row_measure, index, delta_mass))
    return cost.with_measures(col_measure=shifted_measure(cost.col_measure, index, delta_mass))


def _max_fraction(masses, index, direction):
    if direction < 0:
        return 1.0
    n = masses.size
    others = np.delete(masses, index)
    if masses[index] == 0:
        return 0.0
    return min(1.0, (n - 1) * others.min() / masses[index])


def empirical_radius(cost, cfg=None, index=0, side="train", tol_rel=1e-6, max_solves=40):
    """Range of mass shifts on one point that the gradient predicts exactly.

    For each direction, bisects over the shift (as a fraction of the point's
    mass, up to full removal or doubling) and re-solves the exact LP at every
    probe. A probe passes when the first-order prediction matches the actual
    change to ``tol_rel`` relative error.

    Returns
    -------
    (negative, positive) : tuple of float
        Largest passing fractions, e.g. ``(-0.12, 0.3)``.
    """
    if cfg is None:
        cfg = SolverConfig.exact()
    if cfg.mode != "exact_lp":
        raise InputError("empirical_radius re-solves the exact LP; pass an exact_lp config")
    if cost.values.size > 1_000_000:
        raise InstanceTooLarge("instance too large for repeated exact solves")
    base = solve_exact_lp(cost, cfg)
    report = calibrated_gradients(base)
    grad = report.gradients(side)[index]
    masses = cost.row_measure if side == "train" else cost.col_measure
    mass = masses[index]
    floor = 64 * np.finfo(float).eps * max(1.0, abs(base.objective))

    def passes(frac, sign):
        delta = sign * frac * mass
        sol = solve_exact_lp(_perturbed_cost(cost, side, index, delta), cfg, basis=base.basis)
        actual = sol.objective - base.objective
        predicted = delta * grad
        return abs(predicted - actual) <= tol_rel * abs(actual) + floor

    radii = []
    for sign in (-1.0, 1.0):
        hi = _max_fraction(masses, index, sign)
        if hi == 0.0:
            radii.append(0.0)
            continue
        if passes(hi, sign):
            radii.append(sign * hi)
            continue
        lo = 0.0
        for _ in range(max_solves - 1):
            mid = 0.5 * (lo + hi)
            if passes(mid, sign):
                lo = mid
            else:
                hi = mid
        radii.append(sign * lo)
    return radii[0], radii[1]


def screen_dual_uniqueness(cost, sol=None, drift_tol=1e-6, perturbation=1e-9, seed=0):
    """Raise :class:`DegenerateDuals` unless the exact LP duals look unique.

    Requires a primal non-degenerate basis (every basic flow positive) and
    that re-solving with costs perturbed by +/-``perturbation`` moves the
    gauged duals by at most ``drift_tol``.
    """
    if sol is None:
        sol = solve_exact_lp(cost)
    flows = np.array([sol.plan[i, j] for i, j in sol.basis])
    if flows.min() <= 1e-12:
        raise DegenerateDuals("exact solution is primal degenerate; duals are not unique")
    signs = make_rng(seed).choice([-1.0, 1.0], size=cost.values.shape)
    for s in (1.0, -1.0):
        bumped = CostMatrix(
            np.maximum(cost.values + s * perturbation * signs, 0.0), cost.row_measure, cost.col_measure
        )
        other = solve_exact_lp(bumped)
        drift = max(np.abs(other.dual_f - sol.dual_f).max(), np.abs(other.dual_g - sol.dual_g).max())
        if drift > drift_tol:
            raise DegenerateDuals(f"duals drift by {drift:.3g} under a {perturbation:g} cost perturbation")
    return sol


def gap_recovery_check(cost, epsilon, i, k, j, side="train", screen=True, tol=1e-9):
    """Both sides of the exact-vs-regularized gradient-difference identity.

    Train side (``i``, ``k`` training points, ``j`` a validation column)::

        lhs = G_i - G_k                         (exact LP calibrated gradients)
        rhs = Ge_i - Ge_k - eps * N/(N-1) * (1/pi_kj - 1/pi_ij)

    where ``Ge`` and ``pi`` come from the log-barrier solution at ``epsilon``.
    On the validation side ``i``, ``k`` index validation points and ``j`` a
    training row, with ``pi_ji`` in place of ``pi_ij``.

    The identity is exact whenever cells ``(i, j)`` and ``(k, j)`` lie in the
    exact plan's support.
    """
    if side not in SIDES:
        raise InputError(f"side must be one of {SIDES}")
    exact = solve_exact_lp(cost)
    if screen:
        screen_dual_uniqueness(cost, exact)
    bar = solve_log_barrier(cost, SolverConfig(mode="log_barrier", epsilon=epsilon, tol=tol))
    if not bar.converged:
        raise NotConverged("log-barrier solve did not converge", bar.residual)
    N, M = cost.values.shape
    if side == "train":
        g_exact, g_bar, n = calibrate(exact.dual_f), calibrate(bar.dual_f), N
        p_ij, p_kj = bar.plan[i, j], bar.plan[k, j]
    else:
        g_exact, g_bar, n = calibrate(exact.dual_g), calibrate(bar.dual_g), M
        p_ij, p_kj = bar.plan[j, i], bar.plan[j, k]
    lhs = float(g_exact[i] - g_exact[k])
    if i == k:
        return 0.0, 0.0
    rhs = float(g_bar[i] - g_bar[k] - epsilon * n / (n - 1) * (1.0 / p_kj - 1.0 / p_ij))
    return lhs, rhs


def support_triples(sol, side="train"):
    """``(i, k, j)`` with ``i < k`` such that both cells sit in the exact support."""
    plan = sol.plan if side == "train" else sol.plan.T
    out = []
    for j in range(plan.shape[1]):
        rows = np.flatnonzero(plan[:, j] > 0)
        for a in range(rows.size):
            for b in range(a + 1, rows.size):
                out.append((int(rows[a]), int(rows[b]), j))
    return out


def rank_agreement(cost, cfg_entropic, size_cap=1_000_000):
    """Spearman correlation between exact-LP and ``cfg_entropic`` training values."""
    if cost.values.size > size_cap:
        raise InstanceTooLarge(f"{cost.values.shape} exceeds size cap {size_cap}")
    exact = calibrated_gradients(solve_exact_lp(cost))
    other = calibrated_gradients(solve(cost, cfg_entropic))
    if not math.isfinite(other.provenance["residual"]):
        raise NotConverged("entropic solve diverged")
    rho = spearmanr(exact.values_train, other.values_train).statistic
    return float(rho)
