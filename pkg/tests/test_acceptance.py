"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible without ``-s``)
with the measured quantities, then asserts.
"""

import json
import subprocess
import sys
import textwrap
import time
from dataclasses import replace

import numpy as np
import pytest

from oracles import random_instance
from otvaluation.corruption import feature_noise, mislabel
from otvaluation.dataset import duplicate_concat
from otvaluation.detect import (
    BlobConfig,
    detection_curve,
    gaussian_blobs,
    monotonicity_experiment,
    random_baseline,
    value_points,
)
from otvaluation.errors import DegenerateDuals
from otvaluation.hierarchical import HybridCostConfig, dataset_distance
from otvaluation.ot import CostMatrix, SolverConfig, regauge, solve, solve_exact_lp
from otvaluation.valuation import (
    calibrated_gradients,
    empirical_radius,
    gap_recovery_check,
    predict_delta,
    rank_agreement,
    screen_dual_uniqueness,
    shifted_measure,
    support_triples,
)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, elapsed, budget, detail):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail} ({elapsed:.1f}s / {budget}s)")
        return ok

    return emit


def dual_unique(rng, lo, hi, concentration=5.0):
    while True:
        n = int(rng.integers(lo, hi + 1))
        C, a, b = random_instance(rng, n, n, concentration=concentration)
        cost = CostMatrix(C, a, b)
        try:
            return cost, screen_dual_uniqueness(cost)
        except DegenerateDuals:
            continue


def test_zero_sum_and_gauge(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(100)
    worst_sum = worst_gauge = 0.0
    for trial in range(100):
        N, M = rng.integers(2, 65, size=2)
        C, a, b = random_instance(rng, N, M, concentration=None if trial % 2 else 2.0)
        cfg = SolverConfig.exact() if trial % 3 == 0 else SolverConfig(epsilon=0.1)
        sol = solve(CostMatrix(C, a, b), cfg)
        rep = calibrated_gradients(sol)
        scale = max(np.abs(sol.dual_f).max(), np.abs(sol.dual_g).max())
        worst_sum = max(worst_sum, abs(rep.calib_grad_train.sum()) / scale, abs(rep.calib_grad_valid.sum()) / scale)
        shift = rng.normal() * 10
        f2, g2 = regauge(sol.dual_f + shift, sol.dual_g - shift)
        moved = calibrated_gradients(replace(sol, dual_f=sol.dual_f + shift, dual_g=sol.dual_g - shift))
        back = calibrated_gradients(replace(sol, dual_f=f2, dual_g=g2))
        for other in (moved, back):
            worst_gauge = max(
                worst_gauge,
                np.abs(other.calib_grad_train - rep.calib_grad_train).max() / (scale + abs(shift)),
                np.abs(other.calib_grad_valid - rep.calib_grad_valid).max() / (scale + abs(shift)),
            )
    elapsed = time.perf_counter() - t0
    ok = worst_sum <= 1e-9 and worst_gauge <= 1e-12
    assert verdict(1, "zero-sum and gauge invariance", ok, elapsed, 10,
                   f"max |sum|/max|dual| = {worst_sum:.1e}, gauge drift = {worst_gauge:.1e}")


def test_exact_oracle_agreement(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(200)
    worst = 0.0
    for _ in range(50):
        N, M = rng.integers(2, 33, size=2)
        C, a, b = random_instance(rng, N, M)
        cost = CostMatrix(C, a, b)
        exact = solve_exact_lp(cost).objective
        ent = solve(cost, SolverConfig(epsilon=1e-3 * C.mean()))
        assert ent.converged
        worst = max(worst, abs(ent.objective - exact) / exact)
    rhos = []
    for _ in range(10):
        cost, _ = dual_unique(rng, 16, 20)
        rhos.append(rank_agreement(cost, SolverConfig(epsilon=1e-3 * cost.values.mean())))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and min(rhos) >= 0.99
    assert verdict(2, "exact-LP agreement", ok, elapsed, 60,
                   f"worst objective gap {100 * worst:.3f}%, min Spearman {min(rhos):.4f}")


def test_gap_identity(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(300)
    worst = {"train": 0.0, "valid": 0.0}
    count = {"train": 0, "valid": 0}
    for _ in range(25):
        cost, exact = dual_unique(rng, 5, 8)
        eps = 1e-3 * cost.values.mean()
        for side in ("train", "valid"):
            for i, k, j in support_triples(exact, side):
                lhs, rhs = gap_recovery_check(cost, eps, i, k, j, side, screen=False)
                worst[side] = max(worst[side], abs(lhs - rhs) / (abs(lhs) + eps))
                count[side] += 1
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-3 and min(count.values()) > 0
    assert verdict(3, "gradient-difference identity", ok, elapsed, 120,
                   f"train {count['train']} triples worst {worst['train']:.1e}, "
                   f"valid {count['valid']} triples worst {worst['valid']:.1e}")


def test_first_order_exactness(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(400)
    worst, radii = 0.0, []
    for fx in range(20):
        cost, base = dual_unique(rng, 8, 12)
        rep = calibrated_gradients(base)
        idx = int(rng.integers(cost.values.shape[0]))
        neg, pos = empirical_radius(cost, index=idx)
        radii.append((neg, pos))
        for frac in np.linspace(neg, pos, 9):
            delta = frac * cost.row_measure[idx]
            w = shifted_measure(cost.row_measure, idx, delta)
            actual = solve_exact_lp(cost.with_measures(row_measure=w)).objective - base.objective
            pred = predict_delta(rep, idx, "train", delta)
            # same acceptance rule the bisection uses, rounding floor included
            floor = 64 * np.finfo(float).eps * max(1.0, abs(base.objective))
            worst = max(worst, max(abs(pred - actual) - floor, 0.0) / max(abs(actual), 1e-300))
    elapsed = time.perf_counter() - t0
    r = np.array(radii)
    in_band = np.mean((np.minimum(-r[:, 0], r[:, 1]) >= 0.05))
    detail = (f"worst relative error {worst:.1e}; removal radii median {np.median(r[:, 0]):+.3f}, "
              f"addition radii median {np.median(r[:, 1]):+.3f}; "
              f"{100 * in_band:.0f}% of fixtures hold >= 5% both ways (reference band 5-25%)")
    assert verdict(4, "first-order exactness", worst <= 1e-6, elapsed, 120, detail)


def test_duplication_invariance(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(500)
    cfg = HybridCostConfig.oracle()
    worst = 0.0
    for fx in range(5):
        dt, dv = gaussian_blobs(BlobConfig(n=40, d=4, V=4, separation=4), int(rng.integers(1 << 30)), n_valid=30)
        base = dataset_distance(dt, dv, cfg)[0]
        for k in (2, 3, 5):
            worst = max(worst, abs(dataset_distance(duplicate_concat(dt, k), dv, cfg)[0] - base))
    elapsed = time.perf_counter() - t0
    assert verdict(5, "duplication invariance", worst <= 1e-9, elapsed, 30, f"max |change| = {worst:.1e}")


def test_mislabel_monotonicity(verdict):
    t0 = time.perf_counter()
    table = monotonicity_experiment(BlobConfig(n=1000, d=16, V=10), [0.0, 0.02, 0.05, 0.10, 0.15], seeds=range(5))
    elapsed = time.perf_counter() - t0
    rows = "; ".join(" ".join(f"{v:.2f}" for v in row) for row in table.distances)
    assert verdict(6, "mislabel monotonicity", table.increasing.all(), elapsed, 60,
                   f"{int(table.increasing.sum())}/5 seeds strictly increasing [{rows}]")


def test_detection_efficacy(verdict):
    t0 = time.perf_counter()
    blobs = BlobConfig(n=1000, d=16, V=10)
    rates = {"mislabel": [], "feature_noise": []}
    for seed in range(5):
        dt, dv = gaussian_blobs(blobs, 700 + seed)
        for kind, fn in (("mislabel", mislabel), ("feature_noise", feature_noise)):
            noisy, rec = fn(dt, 0.25, seed=seed)
            _, rep = value_points(noisy, dv)
            rates[kind].append(float(detection_curve(rep, rec, budgets=[rec.count]).rates[0]))
    elapsed = time.perf_counter() - t0
    threshold = 2 * random_baseline([250], 1000)[0]
    ok = min(min(v) for v in rates.values()) >= threshold
    detail = ", ".join(f"{k} min {min(v):.3f}" for k, v in rates.items()) + f" (threshold {threshold:.2f})"
    assert verdict(7, "detection efficacy", ok, elapsed, 120, detail)


SCALE_SCRIPT = textwrap.dedent(
    """
    import json, resource, time
    from otvaluation.detect import BlobConfig, gaussian_blobs
    from otvaluation.hierarchical import dataset_distance
    from otvaluation.valuation import calibrated_gradients
    t0 = time.perf_counter()
    dt, dv = gaussian_blobs(BlobConfig(n=10_000, d=32, V=10), 0)
    t1 = time.perf_counter()
    dist, sol, _ = dataset_distance(dt, dv)
    rep = calibrated_gradients(sol)
    t2 = time.perf_counter()
    print(json.dumps({"seconds": t2 - t1, "data_seconds": t1 - t0, "converged": sol.converged,
                      "rss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
                      "n_values": int(rep.values_train.size)}))
    """
)


def test_scale_smoke(verdict):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-c", SCALE_SCRIPT], capture_output=True, text=True, timeout=600)
    elapsed = time.perf_counter() - t0
    assert proc.returncode == 0, proc.stderr
    out = json.loads(proc.stdout.strip().splitlines()[-1])
    gb = out["rss_kb"] / 1024**2
    ok = out["converged"] and out["n_values"] == 10_000 and gb < 2.0 and out["seconds"] < 120
    assert verdict(8, "10k x 10k valuation", ok, out["seconds"], 120,
                   f"peak RSS {gb:.2f} GB, converged={out['converged']}, wall incl. startup {elapsed:.1f}s")
