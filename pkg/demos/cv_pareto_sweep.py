"""Repeated cross-validation over levels and epsilons, then the frontier.

Writes sweep.csv (one row per hyperparameter tuple) and sweep.json (run
metadata and the frontier segments) into the working directory.  The same
thing from a shell:

    fairopt cv --data data/synthetic/tradeoff_train.csv \
        --schema data/synthetic/tradeoff_schema.json --task regression \
        --levels '1,1;2,2' --eps-grid 1,0.1,0.01 --folds 3 --repeats 2 --seed 0 --out sweep
"""
from pathlib import Path

from fairopt.harness import ExperimentConfig, emit_results, pareto_frontier, run_cv, run_metadata

data = Path(__file__).resolve().parents[1] / "data" / "synthetic"
cfg = ExperimentConfig(task="regression", data=str(data / "tradeoff_train.csv"),
                       schema=str(data / "tradeoff_schema.json"),
                       levels=[(1, 1), (2, 2)], eps_grid=[1.0, 0.1, 0.01],
                       folds=3, repeats=2, seed=0)
ds = cfg.load_dataset()
points = run_cv(cfg, ds)
front = pareto_frontier(points)
for p in points:
    mark = "frontier" if any(p is f for f in front) else ""
    print(f"{p.level} eps={p.epsilon:<5g} OR2={p.accuracy:.4f} KS={p.fairness:.4f} {mark}")
print("wrote", *emit_results(points, front, "sweep", metadata=run_metadata(cfg, ds)))
