"""Level-(2,2) fair SVM.

The q = 2 constraints are indefinite quadratics in B.  The solver splits each
one into convex minus convex and linearizes the concave side around the
previous iterate, starting at B = 0.  Each iterate stays feasible and the
hinge risk never goes up.
"""
import numpy as np

from fairopt.constraints import DeltaSchedule, build_constraint_set
from fairopt.data import affine_map, dataset_from_arrays, standardize
from fairopt.metrics import auc, ks_binary
from fairopt.solvers import FOProblem, LossSpec, solve_fo

rng = np.random.default_rng(1)
n = 600
z = (rng.random(n) < 0.4).astype(float)
x = np.c_[z + rng.normal(size=n), rng.normal(size=n), 0.5 * z + rng.normal(size=n)]
y = np.where(x @ [1.0, 0.8, 0.6] + 0.5 * rng.normal(size=n) > 0.5, 1.0, -1.0)
# continuous copy of Z so the m = 2 moments are not redundant
zc = z + 0.3 * rng.normal(size=n)
ds, _ = standardize(dataset_from_arrays(x, y, zc, z_kinds=["continuous"], y_kind="binary"))
spec = affine_map(ds.p_x)

for level, eps in [((1, 1), 1e6), ((1, 1), 0.1), ((2, 2), 0.1), ((2, 2), 0.05)]:
    cs = build_constraint_set(ds, spec, level, DeltaSchedule.epsilon(eps))
    sol = solve_fo(FOProblem(ds, spec, LossSpec("hinge"), cs, lam=100))
    s = sol.rule.scores(ds.x, ds.z)
    hist = " ".join(f"{h:.3f}" for h in sol.history[:6])
    print(f"{level} eps={eps:g}: hinge {sol.objective:.4f}, AUC {auc(s, ds.y):.3f}, "
          f"KS by group {ks_binary(s, z):.3f}, iterations {sol.iterations}, "
          f"worst excess over delta {max(sol.max_violation, 0.0):.1e}")
    if sol.iterations > 1:
        print("   risk along the iterates:", hist)
