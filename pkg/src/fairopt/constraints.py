"""Threshold schedules and assembly of the fairness constraint set.

A level-(g, h) constraint set holds, for every (m, q) in [g] x [h], the
requirement ``||E_n[Z^m s^q] - E_n[Z^m] E_n[s^q]||_inf <= delta(m, q)`` on the
rule output ``s``.  Only q <= 2 is given an explicit coefficient form
(linear for q = 1, quadratic for q = 2); higher q is evaluation-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, FeatureMapSpec, feature_matrix
from .errors import CategoryError, EstimationError, ModeError
from .moments import (
    LinearCoefTensor,
    QuadCoefFamily,
    constraint_residual_generic,
    linear_coef_tensor,
    quad_coef_family,
)

SCHEDULE_ALIASES = {
    "bounded": "bounded",
    "subgaussian": "subgaussian",
    "finite": "finite_moment",
    "finite_moment": "finite_moment",
    "eps": "epsilon",
    "epsilon": "epsilon",
    "eps_conc": "epsilon_plus_concentration",
    "epsilon_plus_concentration": "epsilon_plus_concentration",
    "manual": "manual",
}
MODES = ("disparate_impact", "equalized_odds")
MIN_CATEGORY_SIZE = 10


# --------------------------------------------------------------------------
# concentration radii


def radius_bounded(n, m, q, alpha=1.0, rho=1, p=1, d=1, r=1) -> float:
    """Bounded-variable concentration radius R_{m,q}[n]."""
    log_r = math.log(r) if r > 1 else 0.0
    log_d = math.log(d) if d > 1 else 0.0
    inner = (d * p * math.log(1 + 4 * q) + m * log_r + q * log_d) / n
    return 8.0 * alpha ** (m + rho * q) * p ** (q / 2) * math.sqrt(inner)


def delta_bounded(n, m, q, alpha=1.0, rho=1, p=1, d=1, r=1) -> float:
    return 3.0 * (1.0 + math.log(n)) * radius_bounded(n, m, q, alpha, rho, p, d, r)


def radius_subgaussian(n, m, q, M=1.0, sigma2=1.0, d=1, p=1, r=1) -> float:
    """Sub-Gaussian radius C_{m,q}[n] (decays like n^{-1/6})."""
    if M < 1 or sigma2 < 0:
        raise ValueError("need M >= 1 and sigma2 >= 0")
    # assemble in logs: the combinatorial factors overflow quickly
    if sigma2 == 0:
        return 0.0
    log_val = (
        2 * math.log(math.e * M) + 7 * math.log(2) + 3 * math.log(5) - math.log(math.pi * n)
        + d * p * math.log(1 + 4 * q)
        + m * math.log(r * m**3) + q * math.log(d * q**3)
        + (3 * m + 3 * q) * math.log(24 * sigma2 / math.e)
    )
    return math.exp(log_val / 6)


def delta_subgaussian(n, m, q, M=1.0, sigma2=1.0, d=1, p=1, r=1) -> float:
    c = radius_subgaussian(n, m, q, M, sigma2, d, p, r)
    return 3 * c + c * c


def radius_finite_moment(n, m4m, m4q) -> float:
    """Finite-moment radius from the 4m-th Z and 4q-th score moments."""
    if m4m <= 0 or m4q <= 0:
        raise EstimationError(f"moment estimates must be positive, got {m4m}, {m4q}")
    return math.sqrt(8.0 / n) * (m4m * m4q) ** 0.25


def delta_finite_moment(n, m4m, m4q) -> float:
    y = radius_finite_moment(n, m4m, m4q)
    return 3 * y + y * y


def delta_epsilon(eps, m, q, *, n=None, alpha=1.0, rho=1, p=1, d=1, r=1,
                  concentration=False) -> float:
    """``eps^(m+q) m! q!``, optionally plus the bounded concentration term."""
    if eps < 0:
        raise ValueError("epsilon must be nonnegative")
    val = eps ** (m + q) * math.factorial(m) * math.factorial(q) if math.isfinite(eps) else math.inf
    if concentration:
        if n is None:
            raise ValueError("concentration add-on needs n")
        val += delta_bounded(n, m, q, alpha, rho, p, d, r)
    return val


def directional_moment(samples, k: int, *, n_dirs: int = 10_000, seed: int = 0) -> float:
    """Plug-in ``sup_{|s|=1} E_n <s, U>^k``.

    Exact (over s = +-1) for scalar samples; otherwise the sup is taken over
    the coordinate axes plus ``n_dirs`` seeded random unit directions.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.shape[1] == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n_dirs, u.shape[1]))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        eye = np.eye(u.shape[1])
        dirs = np.vstack([eye, -eye, g])
    return float(np.max(np.mean((u @ dirs.T) ** k, axis=0)))


# --------------------------------------------------------------------------
# schedule object


@dataclass(frozen=True)
class ScheduleContext:
    n: int
    alpha: float = 1.0
    rho: int = 1
    p: int = 1
    r: int = 1
    d: int = 1
    z: np.ndarray | None = None
    omega: np.ndarray | None = None


@dataclass(frozen=True)
class DeltaSchedule:
    """Maps (m, q) to a threshold.

    kinds and their params:

    * ``bounded``: optional overrides of alpha, rho, p, d, r
    * ``subgaussian``: ``M``, ``sigma2``
    * ``finite_moment``: optional ``moments`` {"z": {k: M_k}, "score": {k: M_k}};
      missing moments are estimated from the training data (plug-in)
    * ``epsilon`` / ``epsilon_plus_concentration``: ``eps``
    * ``manual``: ``table`` {(m, q): delta}
    """

    kind: str = "epsilon"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = SCHEDULE_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "subgaussian" and not {"M", "sigma2"} <= set(self.params):
            raise ValueError("subgaussian schedule needs M and sigma2")
        if kind in ("epsilon", "epsilon_plus_concentration") and "eps" not in self.params:
            raise ValueError("epsilon schedule needs eps")
        if kind == "manual":
            table = {tuple(int(v) for v in k) if not isinstance(k, str) else _parse_mq(k): float(v)
                     for k, v in self.params.get("table", {}).items()}
            object.__setattr__(self, "params", {**self.params, "table": table})

    @classmethod
    def epsilon(cls, eps: float) -> "DeltaSchedule":
        return cls("epsilon", {"eps": float(eps)})

    @property
    def is_plug_in(self) -> bool:
        return self.kind == "finite_moment" and not self.params.get("moments")

    def _geometry(self, ctx: ScheduleContext) -> dict:
        g = {"alpha": ctx.alpha, "rho": ctx.rho, "p": ctx.p, "d": ctx.d, "r": ctx.r}
        g.update({k: self.params[k] for k in g if k in self.params})
        return g

    def delta(self, m: int, q: int, ctx: ScheduleContext) -> float:
        kind = self.kind
        if kind == "epsilon":
            val = delta_epsilon(self.params["eps"], m, q)
        elif kind == "epsilon_plus_concentration":
            val = delta_epsilon(self.params["eps"], m, q, n=ctx.n, concentration=True,
                                **self._geometry(ctx))
        elif kind == "bounded":
            val = delta_bounded(ctx.n, m, q, **self._geometry(ctx))
        elif kind == "subgaussian":
            geo = self._geometry(ctx)
            val = delta_subgaussian(ctx.n, m, q, self.params["M"], self.params["sigma2"],
                                    geo["d"], geo["p"], geo["r"])
        elif kind == "finite_moment":
            val = delta_finite_moment(ctx.n, *self._moments(m, q, ctx))
        else:
            try:
                val = self.params["table"][(m, q)]
            except KeyError:
                raise ValueError(f"manual schedule has no entry for (m, q) = ({m}, {q})") from None
        if not (val >= 0):
            raise ValueError(f"schedule produced invalid delta {val} at ({m}, {q})")
        return float(val)

    def _moments(self, m, q, ctx):
        given = self.params.get("moments") or {}
        zm = {int(k): v for k, v in given.get("z", {}).items()}
        sm = {int(k): v for k, v in given.get("score", {}).items()}
        seed = self.params.get("seed", 0)
        if 4 * m in zm:
            m4m = zm[4 * m]
        elif ctx.z is not None:
            m4m = directional_moment(ctx.z, 4 * m, seed=seed)
        else:
            raise EstimationError(f"no estimate of the {4 * m}-th Z moment")
        if 4 * q in sm:
            m4q = sm[4 * q]
        elif ctx.omega is not None:
            m4q = directional_moment(ctx.omega, 4 * q, seed=seed)
        else:
            raise EstimationError(f"no estimate of the {4 * q}-th feature moment")
        return m4m, m4q

    def to_dict(self) -> dict:
        params = dict(self.params)
        if "table" in params:
            params["table"] = {f"{m},{q}": v for (m, q), v in params["table"].items()}
        return {"kind": self.kind, "params": params, "plug_in": self.is_plug_in}


def _parse_mq(key: str) -> tuple[int, int]:
    m, q = key.replace("(", "").replace(")", "").split(",")
    return int(m), int(q)


# --------------------------------------------------------------------------
# constraint set


@dataclass(frozen=True)
class LinearConstraint:
    coef: LinearCoefTensor
    delta: float
    condition: object = None


@dataclass(frozen=True)
class QuadConstraint:
    coef: QuadCoefFamily
    delta: float
    condition: object = None


@dataclass
class ConstraintSet:
    level: tuple[int, int]
    linear: list[LinearConstraint] = field(default_factory=list)
    quadratic: list[QuadConstraint] = field(default_factory=list)
    mode: str = "disparate_impact"
    conditioning: list = field(default_factory=list)
    deltas: dict = field(default_factory=dict)
    # samples the set was built from; used by the generic residual check
    z: np.ndarray | None = None
    omega: np.ndarray | None = None
    groups: list = field(default_factory=list)
    binary_reduction: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        if self.omega is not None:
            return self.omega.shape[1]
        if self.linear:
            return self.linear[0].coef.p
        if self.quadratic:
            return self.quadratic[0].coef.p
        raise ValueError("empty constraint set has no dimension")

    @property
    def solvable(self) -> bool:
        return self.level[1] <= 2

    def linear_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique nonzero rows ``a`` with bounds: ``|a @ b| <= delta``."""
        best: dict[bytes, tuple[np.ndarray, float]] = {}
        for con in self.linear:
            for row in con.coef.rows():
                if not np.any(row):
                    continue
                key = row.tobytes()
                if key not in best or con.delta < best[key][1]:
                    best[key] = (row, con.delta)
        if not best:
            return np.zeros((0, self.p)), np.zeros(0)
        rows, bounds = zip(*best.values())
        return np.array(rows), np.array(bounds)

    def quad_terms(self) -> list[tuple[np.ndarray, float]]:
        """Unique nonzero matrices ``Q`` with bounds: ``|b Q b^T| <= delta``."""
        best: dict[bytes, tuple[np.ndarray, float]] = {}
        for con in self.quadratic:
            for mat in con.coef.matrices():
                if not np.any(mat):
                    continue
                key = mat.tobytes()
                if key not in best or con.delta < best[key][1]:
                    best[key] = (mat, con.delta)
        return list(best.values())

    def _subsamples(self):
        if self.groups:
            for label, idx in self.groups:
                yield label, self.z[idx], self.omega[idx]
        else:
            yield None, self.z, self.omega

    def residuals(self, b) -> dict:
        """Residual per (m, q, condition), from the generic sample evaluator.

        Sets built without samples fall back to their coefficient form.
        """
        b = np.atleast_2d(np.asarray(getattr(b, "b", b), dtype=float))
        out = {}
        if self.z is None:
            for con in self.linear:
                key = (con.coef.m, 1, con.condition)
                out[key] = max(out.get(key, 0.0), con.coef.residual(b))
            for con in self.quadratic:
                key = (con.coef.m, 2, con.condition)
                out[key] = max(out.get(key, 0.0), con.coef.residual(b))
            return out
        g, h = self.level
        for label, z, om in self._subsamples():
            for m in range(1, g + 1):
                for q in range(1, h + 1):
                    out[(m, q, label)] = constraint_residual_generic(b, z, om, m, q)
        return out

    def max_violation(self, b) -> float:
        """``max(residual - delta)`` over every constraint (<= 0 when feasible)."""
        worst = -math.inf
        for (m, q, _), res in self.residuals(b).items():
            worst = max(worst, res - self.deltas[(m, q)] if (m, q) in self.deltas
                        else res - self._coef_delta(m, q))
        return worst if worst > -math.inf else 0.0

    def _coef_delta(self, m, q):
        pool = self.linear if q == 1 else self.quadratic
        return min(c.delta for c in pool if c.coef.m == m)

    def is_feasible(self, b, tol: float = 1e-8) -> bool:
        return self.max_violation(b) <= tol

    def summary(self) -> dict:
        return {
            "level": list(self.level),
            "mode": self.mode,
            "deltas": {f"{m},{q}": d for (m, q), d in sorted(self.deltas.items())},
            "n_linear_rows": int(self.linear_rows()[0].shape[0]),
            "n_quadratic": len(self.quad_terms()),
            "binary_reduction": self.binary_reduction,
            "conditioning": [str(c) for c in self.conditioning],
            **self.metadata,
        }

    @classmethod
    def from_coefficients(cls, linear=(), quadratic=(), level=None) -> "ConstraintSet":
        """Build a set directly from ``(a, delta)`` and ``(Q, delta)`` pairs.

        Each ``a`` is a length-p vector (m = 1, q = 1) and each ``Q`` a
        symmetric p x p matrix (m = 1, q = 2).
        """
        lin = [LinearConstraint(LinearCoefTensor(1, np.atleast_2d(np.asarray(a, float))), float(d))
               for a, d in linear]
        quad = [QuadConstraint(QuadCoefFamily(1, np.asarray(Q, float)[None]), float(d))
                for Q, d in quadratic]
        if level is None:
            level = (1, 2 if quad else 1)
        return cls(level=level, linear=lin, quadratic=quad)


def binary_reduction_eligible(z) -> bool:
    """True when Z^m for m >= 2 adds no new constraints.

    Holds for scalar {0,1} or {-1,+1} coding and for 0/1 one-hot blocks with
    at most one active indicator per row.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    vals = set(np.unique(z).tolist())
    if z.shape[1] == 1:
        return vals <= {0.0, 1.0} or vals <= {-1.0, 1.0}
    return vals <= {0.0, 1.0} and bool(np.all(z.sum(axis=1) <= 1))


def _default_reduction(z) -> bool:
    z = np.asarray(z, dtype=float)
    return binary_reduction_eligible(z) and set(np.unique(z).tolist()) <= {0.0, 1.0}


def build_constraint_set(ds: Dataset, spec: FeatureMapSpec, level, schedule: DeltaSchedule,
                         mode: str = "disparate_impact", binary_reduction: bool | None = None,
                         *, alpha: float | None = None, max_entries: int | None = None,
                         min_category_size: int = MIN_CATEGORY_SIZE) -> ConstraintSet:
    """Assemble the level-(g, h) constraints for training data ``ds``.

    In ``equalized_odds`` mode the constraints are replicated for every
    class of the target and built from that class's rows only.
    """
    g, h = (int(v) for v in level)
    if g < 1 or h < 1:
        raise ValueError("level entries must be >= 1")
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}")
    z = ds.z
    omega = feature_matrix(spec, ds.x, ds.z)
    eligible = binary_reduction_eligible(z)
    if binary_reduction is None:
        binary_reduction = _default_reduction(z)
    elif binary_reduction and not eligible:
        raise ModeError("binary reduction requested but Z is not binary/one-hot coded")
    m_max = 1 if binary_reduction else g

    groups, conditioning = [], []
    if mode == "equalized_odds":
        if ds.z_kind == "continuous":
            raise ModeError("equalized odds needs binary or categorical protected attributes")
        if ds.y_kind != "binary" and np.unique(ds.y).size > 10:
            raise ModeError("equalized odds conditions on the target class; target is continuous")
        for label in np.unique(ds.y):
            idx = np.flatnonzero(ds.y == label)
            if idx.size < min_category_size:
                raise CategoryError(
                    f"class {label:g} has {idx.size} rows (< {min_category_size}) for conditioning"
                )
            groups.append((float(label), idx))
            conditioning.append(float(label))
    subsamples = [(label, idx) for label, idx in groups] or [(None, np.arange(ds.n))]

    alpha = float(ds.metadata.get("alpha", 1.0)) if alpha is None else alpha
    cs = ConstraintSet(level=(g, h), mode=mode, conditioning=conditioning,
                       z=z, omega=omega, groups=groups, binary_reduction=binary_reduction)
    seen = set()
    for label, idx in subsamples:
        zs, oms = z[idx], omega[idx]
        ctx = ScheduleContext(n=idx.size, alpha=alpha, rho=spec.rho, p=spec.p, r=z.shape[1],
                              d=1, z=zs, omega=oms)
        for m in range(1, g + 1):
            for q in range(1, h + 1):
                delta = schedule.delta(m, q, ctx)
                cs.deltas[(m, q)] = min(delta, cs.deltas.get((m, q), math.inf))
                if m > m_max or q > 2:
                    continue
                if q == 1:
                    coef = linear_coef_tensor(zs, oms, m, max_entries=max_entries)
                    con = LinearConstraint(coef, delta, label)
                    key = (1, coef.c.tobytes(), delta)
                    if key not in seen:
                        seen.add(key)
                        cs.linear.append(con)
                else:
                    coef = quad_coef_family(zs, oms, m, max_entries=max_entries)
                    con = QuadConstraint(coef, delta, label)
                    key = (2, coef.q_mats.tobytes(), delta)
                    if key not in seen:
                        seen.add(key)
                        cs.quadratic.append(con)
    cs.metadata["schedule"] = schedule.to_dict()
    return cs
