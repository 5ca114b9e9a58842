"""Fairness and accuracy metrics, plus exact and plug-in independence checks."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import CellError, GroupError, PMFError, ResidualTooLargeError
from .moments import constraint_residual_generic, residual_tensor_generic

N_SPHERE_DIRS = 10_000


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov variants


def _ecdf_at(sorted_sample, t):
    # right-continuous empirical CDF
    return np.searchsorted(sorted_sample, t, side="right") / sorted_sample.size


def ks_two_sample(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise GroupError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    return float(np.max(np.abs(_ecdf_at(a, grid) - _ecdf_at(b, grid))))


def group_labels(z) -> np.ndarray:
    """Collapse a protected attribute to one label per row.

    A 1-D array is returned as is; a 0/1 one-hot block maps to the index of
    the active column (+1), with 0 for the all-zero reference level.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 2 and z.shape[1] == 1:
        z = z[:, 0]
    if z.ndim == 1:
        return z
    if not np.all(np.isin(z, (0.0, 1.0))) or np.any(z.sum(axis=1) > 1):
        raise GroupError("multi-column protected attribute is not a one-hot block")
    return np.where(z.any(axis=1), z.argmax(axis=1) + 1, 0).astype(float)


def ks_binary(scores, z) -> float:
    """Sup distance between the score ECDFs of the two protected groups."""
    s = np.asarray(scores, dtype=float).ravel()
    lab = group_labels(z)
    levels = np.unique(lab)
    if levels.size != 2:
        raise GroupError(f"binary KS needs exactly two groups, got {levels.size}")
    return ks_two_sample(s[lab == levels[0]], s[lab == levels[1]])


def ks_categorical(scores, z) -> float:
    """Largest two-sample KS over all pairs of protected categories."""
    s = np.asarray(scores, dtype=float).ravel()
    lab = group_labels(z)
    levels = np.unique(lab)
    if levels.size < 2:
        raise GroupError("need at least two protected categories")
    samples = [s[lab == v] for v in levels]
    return max(ks_two_sample(a, b) for a, b in itertools.combinations(samples, 2))


def _ks_joint_1d(scores, z) -> float:
    n = scores.size
    s_levels, s_rank = np.unique(scores, return_inverse=True)
    f_s = np.cumsum(np.bincount(s_rank, minlength=s_levels.size)) / n
    order = np.argsort(z, kind="stable")
    zs = z[order]
    counts = np.zeros(s_levels.size)
    worst = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and zs[j] == zs[i]:
            j += 1
        counts += np.bincount(s_rank[order[i:j]], minlength=s_levels.size)
        joint = np.cumsum(counts) / n
        worst = max(worst, float(np.max(np.abs(joint - (j / n) * f_s))))
        i = j
    return worst


def ks_joint_product(scores, z) -> float:
    """``sup_{(s,t)} |F_{Z,S}(s,t) - F_Z(s) F_S(t)|`` over the sample grid.

    For a multi-column Z the maximum over columns is returned.
    """
    s = np.asarray(scores, dtype=float).ravel()
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != s.size:
        raise ValueError("scores and z lengths differ")
    if s.size < 2:
        raise ValueError("need at least two observations")
    return max(_ks_joint_1d(s, z[:, k]) for k in range(z.shape[1]))


def equalized_odds_gap(scores, z, y) -> float:
    """Max over target classes of the categorical KS within that class."""
    s = np.asarray(scores, dtype=float).ravel()
    lab = group_labels(z)
    y = np.asarray(y, dtype=float).ravel()
    groups, classes = np.unique(lab), np.unique(y)
    if groups.size < 2:
        raise GroupError("need at least two protected categories")
    empty = [(float(g), float(c)) for c in classes for g in groups
             if not np.any((lab == g) & (y == c))]
    if empty:
        raise CellError(f"empty (group, class) cells: {empty}", empty)
    return max(ks_categorical(s[y == c], lab[y == c]) for c in classes)


# --------------------------------------------------------------------------
# accuracy


def auc(scores, y) -> float:
    """Mann-Whitney AUC; the larger label is the positive class, ties count 1/2."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    classes = np.unique(y)
    if classes.size != 2:
        raise GroupError("AUC needs exactly two classes")
    pos = y == classes[1]
    n1, n0 = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def out_of_sample_r2(pred, y_test, y_train_mean) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    y_test = np.asarray(y_test, dtype=float).ravel()
    if y_test.size == 0:
        raise ValueError("empty test set")
    base = float(np.sum((y_test - y_train_mean) ** 2))
    if base == 0:
        raise ZeroDivisionError("baseline SSE is zero")
    return 1.0 - float(np.sum((y_test - pred) ** 2)) / base


def pinball_risk(pred, y, over_cost=1.0, under_cost=2.0) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    return float(np.mean(np.maximum(over_cost * (pred - y), under_cost * (y - pred))))


# --------------------------------------------------------------------------
# moment-based diagnostics


def mutual_majorization_estimate(scores, z, g: int, h: int) -> float:
    """Level-limited plug-in of the mutual majorization:
    ``max_{m<=g, q<=h} (residual_{m,q} / (m! q!))^(1/(m+q))``.
    """
    if g < 1 or h < 1:
        raise ValueError("g and h must be >= 1")
    s = np.asarray(scores, dtype=float).reshape(-1, 1)
    z = np.asarray(z, dtype=float)
    best = 0.0
    for m in range(1, g + 1):
        for q in range(1, h + 1):
            res = constraint_residual_generic(np.ones((1, 1)), z, s, m, q)
            best = max(best, (res / (math.factorial(m) * math.factorial(q))) ** (1.0 / (m + q)))
    return best


def _directions(dim: int, k: int, rng) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    eye = np.eye(dim)
    g = rng.standard_normal((k, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return np.vstack([eye, -eye, g])


@dataclass(frozen=True)
class CharacteristicBound:
    value: float
    j: float
    p: float
    approximate: bool


def mutual_characteristic_bound(u, v, g: int, h: int, residual_tol: float, *,
                                n_dirs: int = N_SPHERE_DIRS, seed: int = 0) -> CharacteristicBound:
    """Plug-in of ``[(J + P) / ((g+1)! (h+1)!)]^(1/(g+h+3))``.

    Requires every empirical (m, q) residual up to (g, h) to be at most
    ``residual_tol``.  Sphere suprema are exact for scalar inputs and use
    seeded random directions otherwise (then ``approximate`` is set).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u = u[:, None] if u.ndim == 1 else u
    v = v[:, None] if v.ndim == 1 else v
    eye_v = np.eye(v.shape[1])
    worst, worst_lvl = -math.inf, None
    for m in range(1, g + 1):
        for q in range(1, h + 1):
            res = constraint_residual_generic(eye_v, u, v, m, q)
            if res > worst:
                worst, worst_lvl = res, (m, q)
    if worst > residual_tol:
        raise ResidualTooLargeError(
            f"moment residual {worst:.3g} at (m, q) = {worst_lvl} exceeds {residual_tol}",
            worst_lvl, worst,
        )
    rng = np.random.default_rng(seed)
    both_multi = u.shape[1] > 1 and v.shape[1] > 1
    # with two spheres to search, split the direction budget as a grid
    k = int(math.isqrt(n_dirs)) if both_multi else n_dirs
    su = (u @ _directions(u.shape[1], k, rng).T) ** (g + 1)
    tv = (v @ _directions(v.shape[1], k, rng).T) ** (h + 1)
    n = u.shape[0]
    j_val = float(np.max(su.T @ tv / n))
    p_val = float(np.max(su.mean(axis=0)) * np.max(tv.mean(axis=0)))
    total = max(j_val + p_val, 0.0)
    value = (total / (math.factorial(g + 1) * math.factorial(h + 1))) ** (1.0 / (g + h + 3))
    return CharacteristicBound(value, j_val, p_val, u.shape[1] > 1 or v.shape[1] > 1)


# --------------------------------------------------------------------------
# exact oracle on finite distributions


def _frac(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**12) if not x.is_integer() else Fraction(int(x))
    return Fraction(x)


@dataclass(frozen=True)
class DiscretePMF:
    """Finite joint distribution of (U, V) with exact rational probabilities."""

    support: tuple  # of (u tuple, v tuple, probability)

    def __post_init__(self):
        rows = []
        for u, v, pr in self.support:
            u = tuple(_frac(a) for a in (u if isinstance(u, (list, tuple)) else [u]))
            v = tuple(_frac(a) for a in (v if isinstance(v, (list, tuple)) else [v]))
            pr = _frac(pr)
            if pr < 0:
                raise PMFError(f"negative probability {pr}")
            rows.append((u, v, pr))
        if not rows:
            raise PMFError("empty support")
        if len({len(r[0]) for r in rows}) != 1 or len({len(r[1]) for r in rows}) != 1:
            raise PMFError("support points have inconsistent dimensions")
        total = sum(r[2] for r in rows)
        if total != 1:
            raise PMFError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "support", tuple(rows))

    @classmethod
    def product(cls, pu: dict, pv: dict) -> "DiscretePMF":
        """Independent coupling of two marginals given as {value: prob}."""
        return cls(tuple((u, v, _frac(a) * _frac(b)) for u, a in pu.items() for v, b in pv.items()))

    @classmethod
    def from_json(cls, path) -> "DiscretePMF":
        with open(path) as fh:
            doc = json.load(fh)
        try:
            return cls(tuple((r["u"], r["v"], r["p"]) for r in doc["support"]))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise PMFError(f"malformed pmf file: {exc}") from None

    @property
    def dims(self) -> tuple[int, int]:
        return len(self.support[0][0]), len(self.support[0][1])

    def expect(self, fn) -> Fraction:
        return sum((pr * fn(u, v) for u, v, pr in self.support), Fraction(0))


@dataclass(frozen=True)
class OracleResult:
    passed: bool
    worst_residual: Fraction
    worst_level: tuple | None
    failing_levels: tuple


def _prod(vals) -> Fraction:
    out = Fraction(1)
    for a in vals:
        out *= a
    return out


def independence_oracle(pmf: DiscretePMF, g: int, h: int) -> OracleResult:
    """Exact check of ``E[U^m (x) V^q] = E[U^m] (x) E[V^q]`` for all (m, q) <= (g, h)."""
    pu, pv = pmf.dims
    worst, worst_lvl, failing = Fraction(0), None, []
    for m in range(1, g + 1):
        for q in range(1, h + 1):
            lvl_worst = Fraction(0)
            for iu in itertools.product(range(pu), repeat=m):
                eu = pmf.expect(lambda u, v: _prod(u[i] for i in iu))
                for iv in itertools.product(range(pv), repeat=q):
                    ev = pmf.expect(lambda u, v: _prod(v[i] for i in iv))
                    joint = pmf.expect(lambda u, v: _prod(u[i] for i in iu) * _prod(v[i] for i in iv))
                    lvl_worst = max(lvl_worst, abs(joint - eu * ev))
            if lvl_worst != 0:
                failing.append((m, q))
            if lvl_worst > worst:
                worst, worst_lvl = lvl_worst, (m, q)
    return OracleResult(not failing, worst, worst_lvl, tuple(failing))


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class FairnessReport:
    ks: float
    eo: float | None
    mm_hat: float
    method: str

    def to_dict(self) -> dict:
        return {"ks": self.ks, "eo": self.eo, "mm_hat": self.mm_hat, "method": self.method}


def ks_method(z_kind: str) -> str:
    return {"binary": "binary", "categorical": "categorical"}.get(z_kind, "joint_product")


def fairness_report(scores, z, z_kind: str, y=None, *, g: int = 2, h: int = 2) -> FairnessReport:
    method = ks_method(z_kind)
    fn = {"binary": ks_binary, "categorical": ks_categorical, "joint_product": ks_joint_product}
    ks = fn[method](scores, z)
    eo = None
    if y is not None and method != "joint_product" and np.unique(y).size == 2:
        eo = equalized_odds_gap(scores, z, y)
    return FairnessReport(ks, eo, mutual_majorization_estimate(scores, z, g, h), method)


def residual_table(scores, z, g: int, h: int) -> dict:
    """Signed joint-minus-product tensors for each (m, q), keyed by level."""
    s = np.asarray(scores, dtype=float).reshape(-1, 1)
    return {(m, q): residual_tensor_generic(np.ones((1, 1)), z, s, m, q)
            for m in range(1, g + 1) for q in range(1, h + 1)}
