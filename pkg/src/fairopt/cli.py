"""Command-line entry point: ``fairopt {train,cv,pareto,fairtest,oracle}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .data import standardize
from .errors import DataError, PMFError, SolverError
from .harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    emit_results,
    fair_hypothesis_test,
    fit_rule,
    pareto_frontier,
    read_points_csv,
    run_cv,
    run_metadata,
    simulate_test_power,
)
from .metrics import DiscretePMF, fairness_report, independence_oracle

log = logging.getLogger("fairopt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _level(text: str) -> tuple[int, int]:
    try:
        g, h = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"level must look like 'g,h', got {text!r}") from None
    return g, h


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_experiment_args(p):
    p.add_argument("--config", help="TOML or JSON experiment file")
    p.add_argument("--data", help="CSV dataset")
    p.add_argument("--schema", help="schema file (TOML/JSON) describing column roles")
    p.add_argument("--task", choices=["svm", "regression", "quantile"])
    p.add_argument("--schedule", help="bounded | subgaussian | finite | eps | eps_conc | manual")
    p.add_argument("--mode", choices=["disparate_impact", "equalized_odds"])
    p.add_argument("--seed", type=int)
    p.add_argument("--degree", dest="feature_degree", type=int)


def _config(args, **extra) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("data", "schema", "task", "schedule", "mode", "seed", "feature_degree")}
    overrides.update(extra)
    try:
        if args.config:
            return ExperimentConfig.from_file(args.config, overrides)
        d = {k: v for k, v in overrides.items() if v is not None}
        d.setdefault("seed", 0)
        return ExperimentConfig.from_dict(d)
    except (ValueError, TypeError, KeyError) as exc:
        if isinstance(exc, DataError):
            raise
        raise UsageError(f"bad configuration: {exc}") from None


def cmd_train(args) -> int:
    level = args.level
    cfg = _config(args, eps_grid=[args.eps] if args.eps is not None else None,
                  lam_grid=[args.lam] if args.lam is not None else None)
    ds = cfg.load_dataset()
    train, params = standardize(ds)
    eps = cfg.eps_grid[0] if args.eps is None else args.eps
    lam = cfg.lam_grid[0] if args.lam is None else args.lam
    sol, spec = fit_rule(cfg, train, level, eps, lam)
    scores = sol.rule.scores(train.x, train.z)
    report = fairness_report(scores, train.z, train.z_kind,
                             train.y if cfg.task == "svm" else None, g=2, h=2)
    out = {
        "status": sol.status,
        "objective": sol.objective,
        "max_violation": sol.max_violation,
        "iterations": sol.iterations,
        "level": list(level),
        "epsilon": eps,
        "lambda": lam,
        "train_fairness": report.to_dict(),
        "rule": sol.rule.to_dict(),
        "feature_names": spec.names(train.x_names, train.z_names),
        "standardization": params.to_dict(),
        "metadata": sol.metadata,
    }
    text = json.dumps(out, indent=2, default=float)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    if sol.status == "infeasible_subproblem":
        return EXIT_SOLVER
    return EXIT_OK


def cmd_cv(args) -> int:
    extra = {"folds": args.folds, "repeats": args.repeats, "workers": args.workers,
             "eps_grid": args.eps_grid, "lam_grid": args.lam_grid,
             "levels": args.levels}
    cfg = _config(args, **extra)
    ds = cfg.load_dataset()
    points = run_cv(cfg, ds)
    front = pareto_frontier(points, maximize_accuracy=cfg.task != "quantile")
    paths = emit_results(points, front, args.out, metadata=run_metadata(cfg, ds))
    for p in points:
        flag = f"  [{p.failed_fits}/{p.n_fits} fits failed]" if p.flagged else ""
        print(f"level={p.level} eps={p.epsilon:g} lam={p.lam:g} "
              f"acc={p.accuracy:.4f} fair={p.fairness:.4f}{flag}")
    print("wrote " + ", ".join(str(p) for p in paths))
    if all(p.n_fits == p.failed_fits for p in points):
        return EXIT_SOLVER
    return EXIT_OK


def cmd_pareto(args) -> int:
    try:
        points = read_points_csv(args.points)
    except (KeyError, ValueError) as exc:
        raise DataError(f"cannot read points: {exc}") from None
    if not points:
        raise DataError("points file is empty")
    front = pareto_frontier(points, maximize_accuracy=not args.minimize_accuracy)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in front:
            w.writerow([p.level[0], p.level[1], repr(p.epsilon), repr(p.lam),
                        repr(p.accuracy), repr(p.fairness), 1])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_fairtest(args) -> int:
    if args.simulate:
        res = simulate_test_power(args.rho, args.mu, args.n, args.trials, args.alpha, args.seed)
        out = {"size_trad": res.size_trad, "size_fair": res.size_fair,
               "power_trad": res.power_trad, "power_fair": res.power_fair,
               "trials": res.trials}
    else:
        if not args.data:
            raise UsageError("fairtest needs --data (columns xi, psi) or --simulate")
        try:
            arr = np.genfromtxt(args.data, delimiter=",", names=True)
            xi, psi = arr["xi"], arr["psi"]
        except (ValueError, KeyError) as exc:
            raise DataError(f"cannot read xi/psi columns: {exc}") from None
        r = fair_hypothesis_test(xi, psi, args.rho, args.alpha)
        out = {"p_traditional": r.p_traditional, "p_fair": r.p_fair,
               "reject_traditional": r.reject_traditional, "reject_fair": r.reject_fair,
               "a": r.a}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_oracle(args) -> int:
    pmf = DiscretePMF.from_json(args.pmf)
    g, h = args.level
    res = independence_oracle(pmf, g, h)
    print(json.dumps({
        "passed": res.passed,
        "worst_residual": str(res.worst_residual),
        "worst_level": list(res.worst_level) if res.worst_level else None,
        "failing_levels": [list(lv) for lv in res.failing_levels],
    }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit one rule and report its fairness")
    _add_experiment_args(p)
    p.add_argument("--level", type=_level, default=(1, 1))
    p.add_argument("--eps", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="cross-validated sweep over the hyperparameter grid")
    _add_experiment_args(p)
    p.add_argument("--levels", type=lambda s: [_level(v) for v in s.split(";")],
                   help="e.g. '1,1;2,2'")
    p.add_argument("--eps-grid", type=_floats)
    p.add_argument("--lam-grid", type=_floats)
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", default="results", help="output prefix for .csv/.json")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("pareto", help="non-dominated subset of a points CSV")
    p.add_argument("--points", required=True)
    p.add_argument("--out")
    p.add_argument("--minimize-accuracy", action="store_true",
                   help="accuracy column is a risk (quantile task)")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("fairtest", help="plain vs fair two-sided mean test")
    p.add_argument("--data", help="CSV with columns xi, psi")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--simulate", action="store_true", help="Monte-Carlo size and power")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--mu", type=float, default=0.3)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fairtest)

    p = sub.add_parser("oracle", help="exact moment-independence check of a finite pmf")
    p.add_argument("--pmf", required=True, help="JSON file {'support': [{'u':..,'v':..,'p':..}]}")
    p.add_argument("--level", type=_level, default=(3, 3))
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"fairopt: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PMFError, OSError) as exc:
        print(f"fairopt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"fairopt: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"fairopt: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
