"""Pinball-loss dosing with an asymmetric cost.

Under-dosing costs twice as much as over-dosing, so the unconstrained rule
targets the 2/3 quantile.  Negative recommendations are clamped to zero at
evaluation time only.
"""
import numpy as np

from fairopt.data import dataset_from_arrays
from fairopt.harness import ExperimentConfig, pareto_frontier, run_cv

rng = np.random.default_rng(2)
n = 800
group = rng.integers(0, 3, n)  # categorical protected attribute
weight = rng.normal(size=n) + 0.4 * group
severity = rng.normal(size=n)
dose = np.maximum(0.0, 1.0 + 0.8 * weight + 0.5 * severity + 0.4 * rng.standard_t(5, n))
onehot = np.eye(3)[group][:, 1:]
ds = dataset_from_arrays(np.c_[weight, severity], dose, onehot, z_kinds=["categorical"])

cfg = ExperimentConfig(task="quantile", levels=[(1, 1)], eps_grid=[1.0, 0.3, 0.1, 0.03],
                       folds=3, repeats=1, seed=5)
points = run_cv(cfg, ds)
front = pareto_frontier(points, maximize_accuracy=False)
print("eps       pinball   KS (categorical)  frontier")
for p in points:
    tag = "*" if any(p is f for f in front) else ""
    print(f"{p.epsilon:<8g}  {p.accuracy:.4f}    {p.fairness:.4f}            {tag}")
