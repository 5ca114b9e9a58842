"""Experiment driver: cross-validated sweeps, Pareto frontiers, the fair
hypothesis test, and result files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm
from sklearn.model_selection import KFold, StratifiedKFold

from . import __version__
from .constraints import SCHEDULE_ALIASES, ConstraintSet, DeltaSchedule, build_constraint_set
from .data import (
    Dataset,
    affine_map,
    feature_matrix,
    load_csv,
    load_schema,
    polynomial_map,
    standardize,
)
from .errors import FairOptError
from .metrics import (
    auc,
    equalized_odds_gap,
    ks_binary,
    ks_categorical,
    ks_joint_product,
    ks_method,
    out_of_sample_r2,
    pinball_risk,
)
from .solvers import FOProblem, LossSpec, SolverOptions, solve_fo

TASK_LOSS = {"svm": "hinge", "regression": "squared", "quantile": "pinball"}
EPS_SCHEDULES = ("epsilon", "epsilon_plus_concentration")


# --------------------------------------------------------------------------
# configuration


def _load_mapping(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # python < 3.11
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


@dataclass
class ExperimentConfig:
    task: str = "regression"
    data: str | None = None
    schema: object = None  # path or mapping
    over_cost: float = 1.0
    under_cost: float = 2.0
    levels: list = field(default_factory=lambda: [(1, 1), (1, 2), (2, 1), (2, 2)])
    eps_grid: list = field(default_factory=lambda: [1.0, 0.3, 0.1, 0.03])
    lam_grid: list = field(default_factory=lambda: [100.0])
    schedule: str = "epsilon"
    schedule_params: dict = field(default_factory=dict)
    mode: str = "disparate_impact"
    folds: int = 5
    repeats: int = 5
    seed: int | None = None
    feature_degree: int = 1
    include_baseline: bool = True
    binary_reduction: bool | None = None
    clamp_negative: bool | None = None
    solver_opts: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.task not in TASK_LOSS:
            raise ValueError(f"task must be one of {sorted(TASK_LOSS)}")
        if self.schedule not in SCHEDULE_ALIASES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        self.levels = [tuple(int(v) for v in lvl) for lvl in self.levels]
        self.eps_grid = [float(e) for e in self.eps_grid]
        self.lam_grid = [float(v) for v in self.lam_grid]
        if not self.levels or not self.eps_grid or not self.lam_grid:
            raise ValueError("hyperparameter grids must be nonempty")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if self.repeats < 1:
            raise ValueError("need at least 1 repeat")
        if self.seed is None:
            raise ValueError("a seed is required")
        if self.clamp_negative is None:
            self.clamp_negative = self.task == "quantile"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("description", None)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        d = _load_mapping(path)
        d = d.get("experiment", d)
        base = Path(path).parent
        for key in ("data", "schema"):
            if isinstance(d.get(key), str) and not os.path.isabs(d[key]):
                d[key] = str(base / d[key])
        d.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(d)

    @property
    def loss(self) -> LossSpec:
        return LossSpec(TASK_LOSS[self.task], self.over_cost, self.under_cost)

    @property
    def uses_eps(self) -> bool:
        return SCHEDULE_ALIASES.get(self.schedule) in EPS_SCHEDULES

    def schedule_for(self, eps: float) -> DeltaSchedule:
        if self.uses_eps:
            return DeltaSchedule(self.schedule, {**self.schedule_params, "eps": eps})
        return DeltaSchedule(self.schedule, dict(self.schedule_params))

    def load_dataset(self) -> Dataset:
        if self.data is None or self.schema is None:
            raise ValueError("config needs both data and schema")
        schema = self.schema if isinstance(self.schema, dict) else load_schema(self.schema)
        return load_csv(self.data, schema)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["levels"] = [list(lvl) for lvl in self.levels]
        return d


# --------------------------------------------------------------------------
# evaluation pieces


def feature_map_for(ds: Dataset, degree: int = 1):
    if degree == 1:
        return affine_map(ds.p_x, ds.r)
    return polynomial_map(ds.p_x, ds.r, degree)


def accuracy_metric(task: str) -> str:
    return {"svm": "auc", "regression": "or2", "quantile": "pinball_risk"}[task]


def fairness_value(scores, z, z_kind: str, y=None, mode="disparate_impact") -> float:
    if mode == "equalized_odds":
        return equalized_odds_gap(scores, z, y)
    method = ks_method(z_kind)
    if method == "binary":
        return ks_binary(scores, z)
    if method == "categorical":
        return ks_categorical(scores, z)
    return ks_joint_product(scores, z)


def evaluate_rule(config: ExperimentConfig, b, spec, test: Dataset, y_train_mean: float,
                  z_kind: str) -> tuple[float, float]:
    pred = feature_matrix(spec, test.x, test.z) @ np.ravel(b)
    if config.task == "svm":
        acc = auc(pred, test.y)
    elif config.task == "regression":
        acc = out_of_sample_r2(pred, test.y, y_train_mean)
    else:
        if config.clamp_negative:
            pred = np.maximum(pred, 0.0)
        acc = pinball_risk(pred, test.y, config.over_cost, config.under_cost)
    fair = fairness_value(pred, test.z, z_kind, test.y, config.mode)
    return acc, fair


@dataclass
class ParetoPoint:
    level: tuple
    epsilon: float
    lam: float
    accuracy: float
    fairness: float
    train_objective: float = math.nan
    n_fits: int = 0
    failed_fits: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return self.failed_fits > 0

    @property
    def key(self) -> tuple:
        # repr keeps NaN epsilons (theory schedules) comparable
        return (tuple(self.level), repr(float(self.epsilon)), repr(float(self.lam)))


def _grid(config: ExperimentConfig):
    eps_values = config.eps_grid
    if not config.uses_eps:
        eps_values = [math.nan]  # epsilon plays no role for theory schedules
    tuples = [(lvl, eps, lam) for lvl in config.levels for eps in eps_values for lam in config.lam_grid]
    if config.include_baseline:
        tuples = [((0, 0), math.inf, lam) for lam in config.lam_grid] + tuples
    return tuples


def fit_rule(config: ExperimentConfig, train: Dataset, level, eps, lam):
    """Standardized-scale solve for one hyperparameter tuple; returns (solution, spec)."""
    spec = feature_map_for(train, config.feature_degree)
    opts = SolverOptions.from_dict(config.solver_opts)
    if tuple(level) == (0, 0):
        # baseline: same problem with every threshold infinite
        cs = ConstraintSet(level=(1, 1), deltas={(1, 1): math.inf}, z=train.z,
                           omega=feature_matrix(spec, train.x, train.z),
                           metadata={"unconstrained": True})
    else:
        cs = build_constraint_set(train, spec, level, config.schedule_for(eps), config.mode,
                                  config.binary_reduction)
    sol = solve_fo(FOProblem(train, spec, config.loss, cs, lam, opts))
    return sol, spec


def _fold_unit(args):
    config, ds, train_idx, test_idx, tuples = args
    train_raw, test_raw = ds.subset(train_idx), ds.subset(test_idx)
    out = []
    try:
        train, params = standardize(train_raw)
        test = params.apply(test_raw)
    except FairOptError as exc:
        return [(t, None, None, None, repr(exc)) for t in tuples]
    y_mean = float(np.mean(train.y))
    for t in tuples:
        level, eps, lam = t
        try:
            sol, spec = fit_rule(config, train, level, eps, lam)
            acc, fair = evaluate_rule(config, sol.b, spec, test, y_mean, ds.z_kind)
            out.append((t, acc, fair, sol.objective, None if sol.status == "optimal" else sol.status))
        except (FairOptError, ArithmeticError, ValueError) as exc:
            out.append((t, None, None, None, repr(exc)))
    return out


def cv_splits(config: ExperimentConfig, ds: Dataset):
    """(repeat, fold, train_idx, test_idx) in canonical order."""
    classification = config.task == "svm"
    splits = []
    for rep in range(config.repeats):
        seed = config.seed + rep
        if classification:
            kf = StratifiedKFold(config.folds, shuffle=True, random_state=seed)
            it = kf.split(np.zeros(ds.n), ds.y)
        else:
            kf = KFold(config.folds, shuffle=True, random_state=seed)
            it = kf.split(np.zeros(ds.n))
        for k, (tr, te) in enumerate(it):
            splits.append((rep, k, tr, te))
    return splits


def run_cv(config: ExperimentConfig, ds: Dataset | None = None) -> list[ParetoPoint]:
    """Repeated k-fold sweep over the hyperparameter grid.

    Returns one point per tuple with accuracy/fairness averaged over every
    successful fit.  Failed fits are counted on the point (``failed_fits``),
    never dropped silently.
    """
    ds = config.load_dataset() if ds is None else ds
    tuples = _grid(config)
    units = [(config, ds, tr, te, tuples) for _, _, tr, te in cv_splits(config, ds)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_fold_unit, units))
    else:
        results = [_fold_unit(u) for u in units]
    points = []
    for i, t in enumerate(tuples):
        # results are ordered by split, so the fold order of each mean is fixed
        rows = [res[i] for res in results]
        ok = [r for r in rows if r[1] is not None]
        failures = [r[4] for r in rows if r[4] is not None]
        level, eps, lam = t
        acc = float(np.mean([r[1] for r in ok])) if ok else math.nan
        fair = float(np.mean([r[2] for r in ok])) if ok else math.nan
        obj = float(np.mean([r[3] for r in ok])) if ok else math.nan
        points.append(ParetoPoint(
            tuple(level), eps, lam, acc, fair, obj, len(rows), len(failures),
            {"accuracy_metric": accuracy_metric(config.task),
             "fairness_metric": "equalized_odds" if config.mode == "equalized_odds"
             else ks_method(ds.z_kind),
             "problems": sorted(set(failures))[:5]},
        ))
    return points


def full_data_objectives(config: ExperimentConfig, ds: Dataset, level, lam) -> list[float]:
    """Training objective over the epsilon grid on the whole (standardized) data."""
    train, _ = standardize(ds)
    return [fit_rule(config, train, level, eps, lam)[0].objective for eps in config.eps_grid]


# --------------------------------------------------------------------------
# frontier


def _dominates(a: ParetoPoint, b: ParetoPoint, maximize: bool) -> bool:
    better_acc = a.accuracy >= b.accuracy if maximize else a.accuracy <= b.accuracy
    strict_acc = a.accuracy > b.accuracy if maximize else a.accuracy < b.accuracy
    return better_acc and a.fairness <= b.fairness and (strict_acc or a.fairness < b.fairness)


def pareto_frontier(points, maximize_accuracy: bool = True) -> list[ParetoPoint]:
    """Non-dominated points (better accuracy, lower fairness value), sorted by
    fairness, then smaller epsilon, then smaller level.
    """
    pts = [p for p in points if math.isfinite(p.accuracy) and math.isfinite(p.fairness)]
    front = [p for p in pts if not any(_dominates(q, p, maximize_accuracy) for q in pts)]
    return sorted(front, key=lambda p: (p.fairness, p.epsilon if not math.isnan(p.epsilon)
                                        else math.inf, tuple(p.level)))


# --------------------------------------------------------------------------
# fair hypothesis test


@dataclass(frozen=True)
class HypothesisTestResult:
    p_traditional: float
    p_fair: float
    reject_traditional: bool
    reject_fair: bool
    a: float


def _check_test_params(rho, a):
    if not abs(rho) < 1:
        raise ValueError(f"need |rho| < 1, got {rho}")
    if not 0 < a < 1:
        raise ValueError(f"level a must be in (0, 1), got {a}")


def fair_hypothesis_test(xi, psi, rho: float, a: float = 0.05) -> HypothesisTestResult:
    """Two-sided z-test on the mean of ``xi``, plain and with ``rho * psi`` removed."""
    _check_test_params(rho, a)
    xi = np.asarray(xi, dtype=float).ravel()
    psi = np.asarray(psi, dtype=float).ravel()
    n = xi.size
    if n < 1 or psi.size != n:
        raise ValueError("xi and psi must be nonempty and the same length")
    p_trad = float(2 * norm.cdf(-math.sqrt(n) * abs(xi.mean())))
    if rho == 0:
        p_fair = p_trad
    else:
        p_fair = float(2 * norm.cdf(-math.sqrt(n / (1 - rho**2)) * abs(np.mean(xi - rho * psi))))
    return HypothesisTestResult(p_trad, p_fair, p_trad < a, p_fair < a, a)


@dataclass(frozen=True)
class PowerResult:
    size_trad: float
    size_fair: float
    power_trad: float
    power_fair: float
    trials: int

    def __iter__(self):
        return iter((self.size_trad, self.size_fair, self.power_trad, self.power_fair))


def analytic_power(rho: float, mu: float, n: int, a: float = 0.05) -> tuple[float, float]:
    """Exact rejection rates of the plain and the fair test under mean shift ``mu``."""
    zc = norm.ppf(1 - a / 2)

    def rate(shift):
        return float(norm.sf(zc - shift) + norm.cdf(-zc - shift))

    return rate(mu * math.sqrt(n)), rate(mu * math.sqrt(n / (1 - rho**2)))


def _rejection_rates(rng, rho, mu, n, trials, a, chunk=20_000):
    rej_t = rej_f = 0
    done = 0
    c = math.sqrt(1 - rho**2)
    while done < trials:
        k = min(chunk, trials - done)
        psi = rng.standard_normal((k, n))
        xi = mu + rho * psi + c * rng.standard_normal((k, n))
        m_xi = xi.mean(axis=1)
        p_t = 2 * norm.cdf(-math.sqrt(n) * np.abs(m_xi))
        if rho == 0:
            p_f = p_t
        else:
            p_f = 2 * norm.cdf(-math.sqrt(n / (1 - rho**2)) * np.abs(m_xi - rho * psi.mean(axis=1)))
        rej_t += int(np.sum(p_t < a))
        rej_f += int(np.sum(p_f < a))
        done += k
    return rej_t / trials, rej_f / trials


def simulate_test_power(rho: float, mu_alt: float, n: int, trials: int = 100_000,
                        a: float = 0.05, seed: int = 0) -> PowerResult:
    """Monte-Carlo size (mean 0) and power (mean ``mu_alt`` for xi) of both tests.

    (xi, psi) are standard bivariate normal pairs with correlation ``rho``.
    """
    _check_test_params(rho, a)
    if trials < 10_000:
        raise ValueError("use at least 10^4 trials")
    rng = np.random.default_rng(seed)
    size_t, size_f = _rejection_rates(rng, rho, 0.0, n, trials, a)
    pow_t, pow_f = _rejection_rates(rng, rho, mu_alt, n, trials, a)
    return PowerResult(size_t, size_f, pow_t, pow_f, trials)


# --------------------------------------------------------------------------
# output

CSV_COLUMNS = ("level_g", "level_h", "epsilon", "lambda", "accuracy", "fairness", "on_frontier")


def frontier_segments(frontier) -> list[dict]:
    """Line segments between consecutive frontier points.  A randomized rule
    mixing the two endpoint rules attains any point on a segment.
    """
    return [{"from": _point_dict(a), "to": _point_dict(b)} for a, b in zip(frontier, frontier[1:])]


def _point_dict(p: ParetoPoint) -> dict:
    return {"level": list(p.level), "epsilon": _jsonable(p.epsilon), "lambda": p.lam,
            "accuracy": _jsonable(p.accuracy), "fairness": _jsonable(p.fairness)}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def emit_results(points, frontier, out_prefix, *, fmt: str = "both", metadata: dict | None = None):
    """Write ``<prefix>.csv`` and/or ``<prefix>.json``; returns the paths written."""
    if not points:
        raise ValueError("no points to write")
    out_prefix = Path(out_prefix)
    on_front = {id(p) for p in frontier}
    front_keys = {p.key for p in frontier}
    written = []
    if fmt in ("csv", "both"):
        path = out_prefix.with_suffix(".csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for p in points:
                w.writerow([p.level[0], p.level[1], repr(float(p.epsilon)), repr(float(p.lam)),
                            repr(float(p.accuracy)), repr(float(p.fairness)),
                            int(id(p) in on_front or p.key in front_keys)])
        written.append(path)
    if fmt in ("json", "both"):
        meta = {"version": __version__, **(metadata or {})}
        meta.setdefault("seed", None)
        doc = {
            "metadata": meta,
            "points": [{**_point_dict(p), "train_objective": _jsonable(p.train_objective),
                        "n_fits": p.n_fits, "failed_fits": p.failed_fits,
                        "on_frontier": p.key in front_keys, **p.metadata} for p in points],
            "frontier_segments": frontier_segments(frontier),
        }
        path = out_prefix.with_suffix(".json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
        written.append(path)
    return written


def read_points_csv(path) -> list[ParetoPoint]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(CSV_COLUMNS[:-1]) - set(rows[0] if rows else ())
    if missing:
        raise ValueError(f"points file lacks columns {sorted(missing)}")
    return [ParetoPoint((int(r["level_g"]), int(r["level_h"])), float(r["epsilon"]),
                        float(r["lambda"]), float(r["accuracy"]), float(r["fairness"]))
            for r in rows]


def run_metadata(config: ExperimentConfig, ds: Dataset | None = None) -> dict:
    meta = {
        "seed": config.seed,
        "config": config.to_dict(),
        "schedule": config.schedule_for(config.eps_grid[0]).to_dict(),
        "solver_opts": SolverOptions.from_dict(config.solver_opts).to_dict(),
        "stratification": "target classes" if config.task == "svm" else "none",
        "accuracy_metric": accuracy_metric(config.task),
        "ccp": {"start": "zero", "linearization": "concave part at previous iterate"},
    }
    if ds is not None:
        meta["fairness_metric"] = ("equalized_odds" if config.mode == "equalized_odds"
                                   else ks_method(ds.z_kind))
        meta["n"] = ds.n
        meta["dropped_rows"] = ds.dropped_rows
    return meta


__all__ = [
    "ExperimentConfig", "ParetoPoint", "HypothesisTestResult", "PowerResult",
    "run_cv", "pareto_frontier", "fair_hypothesis_test", "simulate_test_power",
    "analytic_power", "emit_results", "read_points_csv", "fit_rule", "cv_splits",
    "full_data_objectives", "frontier_segments", "run_metadata",
]
