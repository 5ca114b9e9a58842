"""Accuracy against fairness for least squares on the synthetic tradeoff data.

Z leaks into the target through X1.  Shrinking epsilon tightens the
level-(1,1) constraint, which removes the Z-correlated part of the score.
"""
from pathlib import Path

import numpy as np

from fairopt.data import feature_matrix, load_csv, load_schema, standardize
from fairopt.harness import ExperimentConfig, fit_rule
from fairopt.metrics import ks_joint_product, out_of_sample_r2

data = Path(__file__).resolve().parents[1] / "data" / "synthetic"
schema = load_schema(data / "tradeoff_schema.json")
train, params = standardize(load_csv(data / "tradeoff_train.csv", schema))
test = params.apply(load_csv(data / "tradeoff_test.csv", schema))
cfg = ExperimentConfig(task="regression", seed=0)

print(" level    eps      OR2   KS_joint  coef on x1")
for level, eps in [((0, 0), np.inf), ((1, 1), 1.0), ((1, 1), 0.1), ((1, 1), 0.03),
                   ((1, 1), 0.01), ((2, 2), 0.01)]:
    sol, spec = fit_rule(cfg, train, level, eps, 100.0)
    pred = feature_matrix(spec, test.x, test.z) @ sol.b.ravel()
    r2 = out_of_sample_r2(pred, test.y, train.y.mean())
    ks = ks_joint_product(pred, test.z)
    coef = dict(zip(spec.names(train.x_names, train.z_names), sol.b.ravel()))["x1"]
    print(f" {level}  {eps:6g}  {r2:.4f}  {ks:.4f}   {coef:+.3f}")
