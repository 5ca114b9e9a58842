"""Moment residuals as an independence check.

Two discrete pairs: one independent by construction, one where V = U^2.
The exact oracle works on rational pmfs; the sample versions below use the
same residuals on draws from those pmfs.
"""
from fractions import Fraction as F

import numpy as np

from fairopt.metrics import (
    DiscretePMF,
    independence_oracle,
    mutual_characteristic_bound,
    mutual_majorization_estimate,
)
from fairopt.moments import constraint_residual_generic

# exact check: V = U^2 with U uniform on {-1, 0, 1}
# cov(U, V) = 0, so the (1,1) residual vanishes, but (2,1) does not
sq = DiscretePMF(tuple((u, u * u, F(1, 3)) for u in (-1, 0, 1)))
for g, h in [(1, 1), (2, 1), (3, 3)]:
    res = independence_oracle(sq, g, h)
    print(f"V=U^2  level {g},{h}: passed={res.passed} worst={res.worst_residual} at {res.worst_level}")

prod = DiscretePMF.product({-1: F(1, 3), 0: F(1, 3), 1: F(1, 3)}, {0: F(1, 3), 1: F(2, 3)})
print("product pmf, level 3,3:", independence_oracle(prod, 3, 3).passed)

# the same two situations from samples
rng = np.random.default_rng(0)
u = rng.choice([-1.0, 0.0, 1.0], size=20_000)
v_dep = u**2
v_ind = rng.choice([-1.0, 0.0, 1.0], size=u.size) ** 2

print("\nsample residuals (m, q): dependent  independent")
for m, q in [(1, 1), (2, 1), (1, 2), (2, 2)]:
    dep = constraint_residual_generic(np.ones(1), u, v_dep, m, q)
    ind = constraint_residual_generic(np.ones(1), u, v_ind, m, q)
    print(f"  ({m},{q})  {dep:.4f}  {ind:.4f}")

print("\nmutual majorization (3,3):",
      f"dependent {mutual_majorization_estimate(v_dep, u, 3, 3):.3f}",
      f"independent {mutual_majorization_estimate(v_ind, u, 3, 3):.3f}")

# the characteristic bound needs every residual below a tolerance first
b = mutual_characteristic_bound(u, v_ind, 2, 2, residual_tol=0.02)
print(f"characteristic bound at (2,2) for the independent pair: {b.value:.3f}")
