"""``lava`` command line: distance, value, corrupt, detect, oracle-check.

Exit codes: 0 success, 1 bad input (nothing written), 2 a solver did not
converge (outputs are still written).
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import make_rng
from .corruption import (
    CorruptionRecord,
    backdoor_trigger,
    feature_collision,
    feature_noise,
    irrelevant_injection,
    mislabel,
)
from .dataset import load_csv, write_csv
from .detect import (
    default_budgets,
    detection_curve,
    distance_after_removal,
    random_baseline,
)
from .errors import DegenerateDuals, InputError, NotConverged, NotConvergedWarning
from .hierarchical import HybridCostConfig, dataset_distance
from .ot import SolverConfig, euclidean_cost, solve_exact_lp
from .valuation import (
    calibrated_gradients,
    empirical_radius,
    gap_recovery_check,
    predict_delta,
    rank_agreement,
    screen_dual_uniqueness,
    shifted_measure,
    support_triples,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for numeric failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _counts(text):
    out = {}
    for part in text.split(","):
        if not part.strip():
            continue
        try:
            k, v = part.split(":")
            out[int(k)] = int(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected label:count pairs, got {text!r}") from None
    return out


def _solver_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver")
    g.add_argument("--epsilon", type=float, default=0.1, help="entropic / barrier regularization (default 0.1)")
    g.add_argument("--solver", choices=("sinkhorn", "exact_lp", "log_barrier"), default="sinkhorn")
    g.add_argument("--tol", type=float, default=1e-6, help="L1 marginal residual tolerance (default 1e-6)")
    g.add_argument("--max-iters", type=int, default=10_000)
    g.add_argument("--c-weight", type=float, default=1.0, help="weight of the label-distance term")
    g.add_argument("--feature-weight", type=float, default=1.0, help="weight of the feature-distance term")
    g.add_argument("--squared-cost", action="store_true", help="use squared Euclidean feature distances")
    g.add_argument("--missing-label-policy", choices=("error", "impute_max"), default="error")
    return p


def _data_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--train", required=True, help="training CSV")
    p.add_argument("--valid", required=True, help="validation CSV")
    p.add_argument("--mass-policy", choices=("uniform", "column"), default="uniform")
    return p


def _common_flags():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, default=0)
    return p


def build_parser():
    parser = _Parser(prog="lava", description="Optimal-transport dataset distance and data valuation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    solver, data, common = _solver_flags(), _data_flags(), _common_flags()

    sub.add_parser("distance", parents=[data, solver, common], help="class-wise OT distance -> distance.json")
    sub.add_parser("value", parents=[data, solver, common], help="per-point values -> values.csv")

    c = sub.add_parser("corrupt", parents=[common], help="inject a corruption -> corrupted.csv, record.json")
    c.add_argument("--input", required=True)
    c.add_argument("--mass-policy", choices=("uniform", "column"), default="uniform")
    c.add_argument(
        "--kind",
        required=True,
        choices=("mislabel", "feature_noise", "backdoor_trigger", "feature_collision", "irrelevant_injection"),
    )
    c.add_argument("--fraction", type=float, default=0.25)
    c.add_argument("--sigma-scale", type=float, default=1.0)
    c.add_argument("--target-label", type=int, default=0)
    c.add_argument("--patch-coords", type=_int_list, default=[], help="comma-separated feature indices")
    c.add_argument("--patch-value", type=float, default=1.0)
    c.add_argument("--count", type=int, default=1)
    c.add_argument("--base-label", type=int, default=0)
    c.add_argument("--blend-source", type=_float_list, default=None, help="comma-separated feature vector")
    c.add_argument("--alpha", type=float, default=0.5)
    c.add_argument("--donor", default=None, help="CSV of rows to inject")
    c.add_argument("--per-class-counts", type=_counts, default={}, help="label:count,label:count")

    d = sub.add_parser("detect", parents=[data, solver, common], help="detection curve -> curve.csv")
    d.add_argument("--record", required=True, help="record.json from 'lava corrupt'")
    d.add_argument("--budgets", type=_int_list, default=None, help="ascending removal budgets")
    d.add_argument("--distance-curve", action="store_true", help="also recompute distance after each removal")

    o = sub.add_parser("oracle-check", parents=[common], help="solver and gradient oracle checks -> report.json")
    o.add_argument("--size", type=int, default=6, help="fixture size N = M")
    o.add_argument("--epsilon", type=float, default=1e-3, help="barrier weight for the gap identity")
    o.add_argument("--fixtures", type=int, default=5)
    o.add_argument("--tol", type=float, default=1e-3, help="relative tolerance of the gap identity")
    o.add_argument("--rank-size", type=int, default=16, help="fixture size for the rank-agreement check")
    return parser


def _hybrid_cfg(args):
    if args.solver == "exact_lp":
        sc = SolverConfig.exact(max_iters=args.max_iters)
    else:
        sc = SolverConfig(epsilon=args.epsilon, max_iters=args.max_iters, tol=args.tol, mode=args.solver)
    return HybridCostConfig(
        c_weight=args.c_weight,
        feature_weight=args.feature_weight,
        inner=sc,
        outer=sc,
        squared=args.squared_cost,
        missing_label_policy=args.missing_label_policy,
    )


def _load_pair(args):
    dt = load_csv(args.train, args.mass_policy)
    dv = load_csv(args.valid, args.mass_policy)
    V = max(dt.label_universe, dv.label_universe)
    if dt.label_universe != V:
        dt = load_csv(args.train, args.mass_policy, V)
    if dv.label_universe != V:
        dv = load_csv(args.valid, args.mass_policy, V)
    return dt, dv


def _echo(args):
    return {k: v for k, v in sorted(vars(args).items())}


def _dump(obj):
    return json.dumps(obj, indent=2, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o)) + "\n"


def cmd_distance(args):
    dt, dv = _load_pair(args)
    cfg = _hybrid_cfg(args)
    dist, sol, table = dataset_distance(dt, dv, cfg)
    result = {
        "distance": float(dist),
        "converged": bool(sol.converged),
        "residual": float(sol.residual),
        "iterations": int(sol.iterations),
        "mode": sol.mode,
        "epsilon": float(sol.epsilon),
        "label_table": table.to_dict(),
        "train": dt.manifest.to_dict(),
        "valid": dv.manifest.to_dict(),
    }
    report = {"version": __version__, "command": "distance", "config": _echo(args), "distance": float(dist)}
    return {"distance.json": _dump(result), "report.json": _dump(report)}, {}


def cmd_value(args):
    dt, dv = _load_pair(args)
    cfg = _hybrid_cfg(args)
    dist, sol, _ = dataset_distance(dt, dv, cfg)
    rep = calibrated_gradients(sol, {"c_weight": cfg.c_weight, "feature_weight": cfg.feature_weight})
    report = {"version": __version__, "command": "value", "config": _echo(args), "valuation": rep.to_dict()}
    return {"report.json": _dump(report)}, {"values.csv": rep.to_csv}


def cmd_corrupt(args):
    ds = load_csv(args.input, args.mass_policy)
    k = args.kind
    if k == "mislabel":
        out, rec = mislabel(ds, args.fraction, args.seed)
    elif k == "feature_noise":
        out, rec = feature_noise(ds, args.fraction, args.sigma_scale, args.seed)
    elif k == "backdoor_trigger":
        out, rec = backdoor_trigger(
            ds, args.fraction, args.target_label, args.patch_coords, args.patch_value, args.seed
        )
    elif k == "feature_collision":
        if args.blend_source is None:
            raise InputError("--blend-source is required for feature_collision")
        out, rec = feature_collision(ds, args.count, args.base_label, args.blend_source, args.alpha, args.seed)
    else:
        if args.donor is None:
            raise InputError("--donor is required for irrelevant_injection")
        donor = load_csv(args.donor)
        out, rec = irrelevant_injection(ds, donor, args.per_class_counts, args.seed)
    report = {"version": __version__, "command": "corrupt", "config": _echo(args), "record": rec.to_dict()}
    return (
        {"record.json": rec.to_json() + "\n", "report.json": _dump(report)},
        {"corrupted.csv": lambda p: write_csv(out, p)},
    )


def cmd_detect(args):
    dt, dv = _load_pair(args)
    rec = CorruptionRecord.load(args.record)
    cfg = _hybrid_cfg(args)
    budgets = default_budgets(dt.n) if args.budgets is None else args.budgets
    dist, sol, _ = dataset_distance(dt, dv, cfg)
    rep = calibrated_gradients(sol)
    curve = detection_curve(rep, rec, budgets, seed=args.seed, config=_echo(args))
    report = {
        "version": __version__,
        "command": "detect",
        "config": _echo(args),
        "distance": float(dist),
        "curve": curve.to_dict(),
        "random_baseline": random_baseline(curve.budgets, dt.n).tolist(),
    }
    if args.distance_curve:
        removal = [0] + [int(b) for b in curve.budgets if b < dt.n]
        report["distance_after_removal"] = {
            "budgets": removal,
            "distances": distance_after_removal(dt, dv, rep, removal, cfg).tolist(),
        }
    return {"report.json": _dump(report)}, {"curve.csv": curve.to_csv}


def _generic_fixture(rng, size, attempts=200):
    """Random planar point clouds whose exact LP has unique duals."""
    for _ in range(attempts):
        cost = euclidean_cost(rng.random((size, 2)), rng.random((size, 2)), rng.dirichlet(np.ones(size) * 5), None)
        try:
            return cost, screen_dual_uniqueness(cost)
        except DegenerateDuals:
            continue
    raise NotConverged(f"no dual-unique {size}x{size} fixture in {attempts} draws")


def cmd_oracle_check(args):
    if args.size < 2 or args.fixtures < 1 or args.rank_size < 2:
        raise InputError("--size and --rank-size must be >= 2, --fixtures >= 1")
    if not args.epsilon > 0:
        raise InputError("--epsilon must be positive")
    rng = make_rng(args.seed)
    checks = []
    for fx in range(args.fixtures):
        cost, exact = _generic_fixture(rng, args.size)
        worst = 0.0
        try:
            for side in ("train", "valid"):
                for i, k, j in support_triples(exact, side):
                    lhs, rhs = gap_recovery_check(cost, args.epsilon, i, k, j, side, screen=False)
                    worst = max(worst, abs(lhs - rhs) / (abs(lhs) + args.epsilon))
        except NotConverged as exc:
            checks.append({"check": "gap_recovery", "fixture": fx, "error": str(exc), "pass": False})
        else:
            checks.append(
                {"check": "gap_recovery", "fixture": fx, "worst_rel_error": worst, "pass": worst <= args.tol}
            )

        neg, pos = empirical_radius(cost, index=0)
        rep = calibrated_gradients(exact)
        ok = True
        for frac in (neg, pos):
            if frac == 0:
                continue
            delta = frac * cost.row_measure[0]
            shifted = cost.with_measures(row_measure=shifted_measure(cost.row_measure, 0, delta))
            actual = solve_exact_lp(shifted).objective - exact.objective
            pred = predict_delta(rep, 0, "train", delta)
            ok &= abs(pred - actual) <= 1e-6 * abs(actual) + 1e-12
        checks.append({"check": "first_order", "fixture": fx, "radius": [neg, pos], "pass": bool(ok)})

    cost, _ = _generic_fixture(rng, args.rank_size)
    eps = 1e-3 * float(cost.values.mean())
    rho = rank_agreement(cost, SolverConfig(epsilon=eps, mode="sinkhorn"))
    checks.append({"check": "rank_agreement", "epsilon": eps, "spearman": rho, "pass": rho >= 0.99})
    passed = all(c["pass"] for c in checks)
    report = {"version": __version__, "command": "oracle-check", "config": _echo(args), "passed": passed, "checks": checks}
    return {"report.json": _dump(report)}, {}, passed


COMMANDS = {
    "distance": cmd_distance,
    "value": cmd_value,
    "corrupt": cmd_corrupt,
    "detect": cmd_detect,
    "oracle-check": cmd_oracle_check,
}


def _write(out_dir, texts, writers):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in texts.items():
        (out / name).write_text(text, encoding="utf-8")
    for name, fn in writers.items():
        fn(out / name)


def main(argv=None):
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = COMMANDS[args.command](args)
        except (InputError, OSError, UnicodeDecodeError, DegenerateDuals) as exc:
            print(f"lava {args.command}: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except NotConverged as exc:
            print(f"lava {args.command}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    texts, writers = result[0], result[1]
    try:
        _write(args.out, texts, writers)
    except OSError as exc:
        print(f"lava {args.command}: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    stalled = [w for w in caught if issubclass(w.category, NotConvergedWarning)]
    for w in caught:
        if not issubclass(w.category, NotConvergedWarning):
            warnings.showwarning(w.message, w.category, w.filename, w.lineno)
    if stalled:
        print(f"lava {args.command}: {stalled[0].message}", file=sys.stderr)
        return EXIT_NUMERIC
    if len(result) > 2 and not result[2]:
        print("lava oracle-check: some checks failed; see report.json", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
