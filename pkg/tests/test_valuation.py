import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_transport, random_instance
from otvaluation.dataset import LabeledDataset
from otvaluation.errors import DegenerateDuals, DegenerateSizeWarning, InstanceTooLarge, MassWouldGoNegative
from otvaluation.hierarchical import HybridCostConfig, dataset_distance
from otvaluation.ot import CostMatrix, SolverConfig, euclidean_cost, solve, solve_exact_lp
from otvaluation.ot.types import TransportSolution
from otvaluation.valuation import (
    calibrate,
    calibrated_gradients,
    empirical_radius,
    gap_recovery_check,
    predict_delta,
    rank_agreement,
    screen_dual_uniqueness,
    shifted_measure,
    stable_ranking,
    support_triples,
)


def fake_solution(f, g):
    f, g = np.asarray(f, float), np.asarray(g, float)
    return TransportSolution(
        plan=np.full((f.size, g.size), 1 / (f.size * g.size)),
        dual_f=f,
        dual_g=g,
        objective=0.0,
        residual=0.0,
        iterations=0,
        mode="exact_lp",
        epsilon=0.0,
    )


def generic_cost(r, N, M, concentration=3.0):
    C, a, b = random_instance(r, N, M, concentration=concentration)
    return CostMatrix(C, a, b)


def test_formula_two_points():
    assert calibrate([3.0, 1.0]).tolist() == [2.0, -2.0]


def test_formula_matches_leave_one_out_mean(rng):
    f = rng.normal(size=9)
    loo = np.array([f[i] - np.delete(f, i).mean() for i in range(9)])
    assert np.allclose(calibrate(f), loo, atol=1e-14)


def test_equal_duals_give_zero():
    assert np.all(calibrate(np.full(5, 2.5)) == 0)


def test_report_fields():
    rep = calibrated_gradients(fake_solution([3.0, 1.0, 2.0], [0.5, 0.0]))
    assert np.array_equal(rep.values_train, -rep.calib_grad_train)
    assert rep.ranking_train.tolist() == [0, 2, 1]
    assert np.array_equal(rep.values_valid, -rep.calib_grad_valid)


def test_stable_ranking_ties():
    assert stable_ranking([1.0, 0.0, 1.0, 0.0]).tolist() == [1, 3, 0, 2]


def test_single_point_side_warns():
    with pytest.warns(DegenerateSizeWarning):
        rep = calibrated_gradients(fake_solution([1.0], [0.3, 0.0]))
    assert rep.calib_grad_train.tolist() == [0.0] and rep.degenerate


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 2**31), st.floats(-1e3, 1e3))
@settings(max_examples=50)
def test_zero_sum_and_gauge(N, M, seed, shift):
    r = np.random.default_rng(seed)
    cost = generic_cost(r, N, M)
    for cfg in (SolverConfig.exact(), SolverConfig(epsilon=0.05)):
        sol = solve(cost, cfg)
        rep = calibrated_gradients(sol)
        scale = max(np.abs(sol.dual_f).max(), np.abs(sol.dual_g).max(), 1e-300)
        assert abs(rep.calib_grad_train.sum()) <= 1e-9 * scale
        assert abs(rep.calib_grad_valid.sum()) <= 1e-9 * scale
        moved = calibrated_gradients(fake_solution(sol.dual_f + shift, sol.dual_g - shift))
        tol = 1e-12 * (scale + abs(shift))
        assert np.allclose(moved.calib_grad_train, rep.calib_grad_train, rtol=0, atol=tol)
        assert np.allclose(moved.calib_grad_valid, rep.calib_grad_valid, rtol=0, atol=tol)


@given(st.integers(2, 12), st.integers(0, 2**31))
@settings(max_examples=20)
def test_exact_gradients_match_highs_duals(n, seed):
    r = np.random.default_rng(seed)
    cost = generic_cost(r, n, n + 2)
    try:
        sol = screen_dual_uniqueness(cost)
    except DegenerateDuals:
        return
    _, f_ref, g_ref, _ = lp_transport(cost.values, cost.row_measure, cost.col_measure)
    rep = calibrated_gradients(sol)
    assert np.allclose(rep.calib_grad_train, calibrate(f_ref), atol=1e-8)
    assert np.allclose(rep.calib_grad_valid, calibrate(g_ref), atol=1e-8)


def test_cost_scaling_keeps_ranking(rng):
    cost = generic_cost(rng, 15, 12)
    base = calibrated_gradients(solve_exact_lp(cost))
    scaled = calibrated_gradients(solve_exact_lp(cost.scaled(3.0)))
    assert np.allclose(scaled.calib_grad_train, 3 * base.calib_grad_train, atol=1e-12)
    assert np.array_equal(scaled.ranking_train, base.ranking_train)


def test_row_permutation_equivariance(rng):
    cost = generic_cost(rng, 10, 9)
    perm = rng.permutation(10)
    base = calibrated_gradients(solve_exact_lp(cost))
    moved = calibrated_gradients(solve_exact_lp(CostMatrix(cost.values[perm], cost.row_measure[perm], cost.col_measure)))
    assert np.allclose(moved.calib_grad_train, base.calib_grad_train[perm], atol=1e-12)


def test_exchangeable_instance_has_zero_gradients():
    # every row sees the same multiset of costs: all row duals coincide
    n = 6
    C = np.array([[abs(i - j) % n for j in range(n)] for i in range(n)], float)
    C = np.minimum(C, n - C)
    rep = calibrated_gradients(solve(CostMatrix(C), SolverConfig(epsilon=0.1)))
    assert np.allclose(rep.calib_grad_train, 0, atol=1e-9)


def test_predict_delta_contract():
    rep = calibrated_gradients(fake_solution([3.0, 1.0], [0.0, 0.0]))
    object.__setattr__(rep, "masses_train", np.array([0.5, 0.5]))
    assert predict_delta(rep, 0, "train", 0.0) == 0.0
    assert predict_delta(rep, 0, "train", 0.1) == pytest.approx(0.2)
    with pytest.raises(MassWouldGoNegative):
        predict_delta(rep, 0, "train", -0.6)
    with pytest.raises(MassWouldGoNegative):
        predict_delta(rep, 0, "train", 0.6)


def test_shifted_measure():
    w = shifted_measure(np.array([0.25, 0.25, 0.5]), 2, 0.1)
    assert np.allclose(w, [0.2, 0.2, 0.6]) and abs(w.sum() - 1) < 1e-15
    with pytest.raises(MassWouldGoNegative):
        shifted_measure(np.array([0.5, 0.5]), 0, -0.6)


@given(st.integers(0, 2**31), st.sampled_from(["train", "valid"]))
@settings(max_examples=15)
def test_first_order_exact_within_radius(seed, side):
    r = np.random.default_rng(seed)
    cost = generic_cost(r, 7, 6)
    try:
        base = screen_dual_uniqueness(cost)
    except DegenerateDuals:
        return
    idx = int(r.integers(7 if side == "train" else 6))
    neg, pos = empirical_radius(cost, index=idx, side=side)
    assert neg < 0 < pos
    rep = calibrated_gradients(base)
    masses = cost.row_measure if side == "train" else cost.col_measure
    for frac in (neg, 0.5 * neg, 0.5 * pos, pos):
        delta = frac * masses[idx]
        w = shifted_measure(masses, idx, delta)
        moved = cost.with_measures(row_measure=w) if side == "train" else cost.with_measures(col_measure=w)
        actual = solve_exact_lp(moved).objective - base.objective
        pred = predict_delta(rep, idx, side, delta)
        assert abs(pred - actual) <= 1e-6 * abs(actual) + 1e-13


def test_uniform_rectangular_radii_positive(rng):
    for _ in range(3):
        cost = euclidean_cost(rng.random((32, 2)), rng.random((31, 2)))
        neg, pos = empirical_radius(cost, index=int(rng.integers(32)))
        assert neg < 0 < pos


def test_duplicated_point_full_removal(rng):
    hits = 0
    for _ in range(5):
        X = rng.random((8, 2))
        X[1] = X[0]
        cost = euclidean_cost(X, rng.random((7, 2)))
        base = solve_exact_lp(cost)
        neg, _ = empirical_radius(cost, index=0)
        hits += neg == -1.0
        rep = calibrated_gradients(base)
        delta = -cost.row_measure[0]
        actual = solve_exact_lp(cost.with_measures(row_measure=shifted_measure(cost.row_measure, 0, delta))).objective
        if neg == -1.0:
            assert abs(predict_delta(rep, 0, "train", delta) - (actual - base.objective)) <= 1e-6 * abs(
                actual - base.objective
            ) + 1e-13
    assert hits == 5


def test_radius_size_cap():
    with pytest.raises(InstanceTooLarge):
        empirical_radius(CostMatrix(np.ones((1001, 1000))))


def test_screen_rejects_degenerate():
    # uniform square assignment: every optimal basis carries zero flows
    with pytest.raises(DegenerateDuals):
        screen_dual_uniqueness(CostMatrix(np.random.default_rng(0).random((5, 5))))


def _screened(r, n):
    while True:
        cost = generic_cost(r, n, n)
        try:
            return cost, screen_dual_uniqueness(cost)
        except DegenerateDuals:
            continue


def test_gap_identity_same_index():
    r = np.random.default_rng(2)
    cost, _ = _screened(r, 5)
    assert gap_recovery_check(cost, 1e-3, 2, 2, 0) == (0.0, 0.0)


@given(st.integers(0, 2**31), st.sampled_from(["train", "valid"]))
@settings(max_examples=8)
def test_gap_identity_on_support(seed, side):
    r = np.random.default_rng(seed)
    n = int(r.integers(5, 9))
    cost, exact = _screened(r, n)
    eps = 1e-3 * cost.values.mean()
    triples = support_triples(exact, side)
    for i, k, j in triples:
        lhs, rhs = gap_recovery_check(cost, eps, i, k, j, side, screen=False)
        assert abs(lhs - rhs) <= 1e-3 * (abs(lhs) + eps)


def test_support_has_no_shared_column_pairs():
    # a non-degenerate optimal support is a spanning tree: no 4-cycles
    r = np.random.default_rng(7)
    _, exact = _screened(r, 9)
    triples = support_triples(exact, "train")
    assert len({(i, k) for i, k, _ in triples}) == len(triples)


def test_gap_rhs_closed_form():
    r = np.random.default_rng(8)
    cost, _ = _screened(r, 6)
    C, n = cost.values, 6
    for i, k, j in [(0, 1, 0), (2, 5, 3), (4, 3, 1)]:
        _, rhs = gap_recovery_check(cost, 1e-2, i, k, j, screen=False)
        assert abs(rhs - n / (n - 1) * (C[i, j] - C[k, j])) <= 1e-9 * (1 + abs(rhs))


def test_gap_screen_raises_on_degenerate():
    with pytest.raises(DegenerateDuals):
        gap_recovery_check(CostMatrix(np.random.default_rng(0).random((5, 5))), 1e-3, 0, 1, 0)


def test_rank_agreement_small_epsilon():
    r = np.random.default_rng(3)
    for _ in range(3):
        cost, _ = _screened(r, 20)
        rho = rank_agreement(cost, SolverConfig(epsilon=1e-4 * cost.values.mean()))
        assert rho >= 0.99


def test_rank_agreement_exact_is_one(rng):
    cost = generic_cost(rng, 12, 10)
    assert rank_agreement(cost, SolverConfig.exact()) == pytest.approx(1.0)


def test_report_serialization(tmp_path):
    dt = LabeledDataset.uniform(np.arange(8.0)[:, None], np.arange(8) % 2)
    dv = LabeledDataset.uniform(np.arange(7.0)[:, None] + 0.3, np.arange(7) % 2)
    _, sol, _ = dataset_distance(dt, dv, HybridCostConfig())
    rep = calibrated_gradients(sol)
    rep.to_csv(tmp_path / "v.csv")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "index,value,calibrated_gradient,rank"
    assert len(lines) == 9
    ranks = [int(line.split(",")[3]) for line in lines[1:]]
    assert ranks == list(range(8))
    vals = [float(line.split(",")[1]) for line in lines[1:]]
    assert vals == sorted(vals)
    data = json.loads(rep.to_json(tmp_path / "v.json"))
    assert data["provenance"]["mode"] == "sinkhorn"
