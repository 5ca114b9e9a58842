"""Generate the synthetic fairness/accuracy tradeoff data and freeze its thresholds.

X ~ N(0, I_5), Z = X1 + 0.3 * noise, Y = 0.5 X1 + X2 + 0.6 X3 + 0.3 X4 + 0.1 X5 + 0.5 * noise.

The population quantities below follow from the construction alone (no
fitting), and are written next to the data so the acceptance test can read
them instead of re-deriving anything after seeing model output:

* share of explained variance carried by X1 = 0.25 / 1.71; removing all of
  the score's covariance with Z removes (to first order) exactly that share
  of OR2, so the expected relative OR2 drop is ~0.146.
* correlation of the Bayes score with Z is sqrt(share) * corr(X1, Z); for a
  bivariate normal the joint-vs-product CDF gap peaks at the medians with
  value arcsin(rho) / (2 pi).

Run once: python3 scripts/make_tradeoff_data.py
"""

import argparse
import csv
import json
import math
from pathlib import Path

import numpy as np

COEF = np.array([0.5, 1.0, 0.6, 0.3, 0.1])
Z_NOISE = 0.3
Y_NOISE = 0.5
SEED = 20240611


def sample(n, rng):
    x = rng.standard_normal((n, 5))
    z = x[:, 0] + Z_NOISE * rng.standard_normal(n)
    y = x @ COEF + Y_NOISE * rng.standard_normal(n)
    return x, z, y


def write_csv(path, x, z, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(5)] + ["z", "y"])
        for xi, zi, yi in zip(x, z, y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(zi)), repr(float(yi))])


def population_summary():
    explained = float(COEF @ COEF)
    share = COEF[0] ** 2 / explained
    corr_x1_z = 1 / math.sqrt(1 + Z_NOISE**2)
    rho = math.sqrt(share) * corr_x1_z
    return {
        "x1_share_of_explained_variance": share,
        "or2_unconstrained_population": explained / (explained + Y_NOISE**2),
        "or2_fair_population": (explained - COEF[0] ** 2) / (explained + Y_NOISE**2),
        "corr_bayes_score_z": rho,
        "ks_joint_product_unconstrained_population": math.asin(rho) / (2 * math.pi),
        "ks_joint_product_upper_bound_any_rule": 0.25,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data" / "synthetic"))
    ap.add_argument("--n-train", type=int, default=2000)
    ap.add_argument("--n-test", type=int, default=2000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    write_csv(out / "tradeoff_train.csv", *sample(args.n_train, rng))
    write_csv(out / "tradeoff_test.csv", *sample(args.n_test, rng))
    (out / "tradeoff_schema.json").write_text(json.dumps({"columns": {
        **{f"x{j + 1}": "predictor:continuous" for j in range(5)},
        "z": "protected:continuous", "y": "target:continuous"}}, indent=2) + "\n")
    thresholds = {
        "seed": SEED,
        "n_train": args.n_train,
        "n_test": args.n_test,
        # stated acceptance thresholds, frozen before any model was fit
        "ks_unconstrained_min": 0.3,
        "ks_fair_max": 0.05,
        "or2_relative_drop_max": 0.2,
        "level": [1, 1],
        "eps": 0.01,
        "lam": 100.0,
        "population": population_summary(),
    }
    (out / "tradeoff_thresholds.json").write_text(json.dumps(thresholds, indent=2) + "\n")
    print(json.dumps(thresholds, indent=2))


if __name__ == "__main__":
    main()
