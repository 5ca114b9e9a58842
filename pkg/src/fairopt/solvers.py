"""Training of fair scalar decision rules.

Level h = 1 problems are convex (linear fairness constraints plus a norm
ball) and are solved in one shot.  Level h = 2 adds two-sided quadratic
constraints ``|b Q b^T| <= delta`` with indefinite Q; those are handled by a
constrained convex-concave procedure started from b = 0.

The convex subproblems go to cvxpy/Clarabel.  Every returned rule is
re-checked against the constraints with the sample-based residual evaluator
and, if the backend left a violation above tolerance, shrunk toward zero
until it is feasible (the constraints are homogeneous in b).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .constraints import ConstraintSet
from .data import Dataset, DecisionRule, FeatureMapSpec, feature_matrix
from .errors import ContractError, SolverError, UnsupportedLevelError

LOSS_KINDS = ("hinge", "squared", "pinball")


@dataclass(frozen=True)
class LossSpec:
    kind: str = "squared"
    over_cost: float = 1.0
    under_cost: float = 2.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.kind == "pinball":
            if self.over_cost < 0 or self.under_cost < 0:
                raise ValueError("pinball weights must be nonnegative")
            if self.over_cost == 0 and self.under_cost == 0:
                raise ValueError("pinball weights cannot both be zero")

    def check_targets(self, y):
        if self.kind == "hinge" and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("hinge loss needs targets in {-1, +1}")

    def risk(self, scores, y) -> float:
        """Empirical risk of raw scores."""
        s = np.asarray(scores, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        if self.kind == "hinge":
            return float(np.mean(np.maximum(0.0, 1.0 - y * s)))
        if self.kind == "squared":
            return float(np.mean((y - s) ** 2))
        return float(np.mean(np.maximum(self.over_cost * (s - y), self.under_cost * (y - s))))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "pinball":
            out.update(over_cost=self.over_cost, under_cost=self.under_cost)
        return out


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-8
    obj_tol: float = 1e-6
    ccp_step_tol: float = 1e-6
    ccp_max_iter: int = 100
    backend_tol: float = 1e-10
    backend_max_iter: int = 500

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverOptions":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver options {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class FOProblem:
    ds: Dataset
    spec: FeatureMapSpec
    loss: LossSpec
    constraints: ConstraintSet
    lam: float = 1e6
    solver_opts: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not self.lam >= 1:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if self.constraints.p != self.spec.p:
            raise ContractError("constraint set and feature map disagree on p")
        self.loss.check_targets(self.ds.y)

    @property
    def omega(self) -> np.ndarray:
        if self.constraints.omega is not None and self.constraints.omega.shape[0] == self.ds.n:
            return self.constraints.omega
        return feature_matrix(self.spec, self.ds.x, self.ds.z)


@dataclass
class FOSolution:
    rule: DecisionRule
    objective: float
    max_violation: float
    iterations: int
    status: str
    history: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    iterates: list = field(default_factory=list)

    @property
    def b(self) -> np.ndarray:
        return self.rule.b


# --------------------------------------------------------------------------
# convex pieces


def dc_split(Q, *, sym_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Split symmetric Q into PSD parts with ``Q = Q_plus - Q_minus``."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ContractError(f"expected a square matrix, got {Q.shape}")
    if np.max(np.abs(Q - Q.T), initial=0.0) > sym_tol:
        raise ContractError("matrix is not symmetric")
    Q = 0.5 * (Q + Q.T)
    w, v = np.linalg.eigh(Q)
    q_plus = (v * np.maximum(w, 0.0)) @ v.T
    q_minus = (v * np.maximum(-w, 0.0)) @ v.T
    return 0.5 * (q_plus + q_plus.T), 0.5 * (q_minus + q_minus.T)


def _psd_factor(P: np.ndarray) -> np.ndarray:
    """L with ``L @ L.T == P`` (columns for positive eigenvalues only)."""
    w, v = np.linalg.eigh(0.5 * (P + P.T))
    keep = w > 1e-14 * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    return v[:, keep] * np.sqrt(w[keep])


def _loss_expr(loss: LossSpec, b, omega, y, constraints: list):
    n = omega.shape[0]
    if loss.kind == "squared":
        # gram form keeps the cone size at p regardless of n
        gram = omega.T @ omega / n
        lin = omega.T @ y / n
        L = _psd_factor(gram)
        return cp.sum_squares(L.T @ b) - 2 * lin @ b + float(y @ y) / n
    s = cp.Variable(n, name="slack")
    scores = omega @ b
    if loss.kind == "hinge":
        constraints += [s >= 0, s >= 1 - cp.multiply(y, scores)]
    else:
        constraints += [s >= 0, s >= loss.over_cost * (scores - y),
                        s >= loss.under_cost * (y - scores)]
    return cp.sum(s) / n


def _solve(prob: cp.Problem, opts: SolverOptions):
    tol = opts.backend_tol
    # "inaccurate" solutions are accepted: the caller re-checks feasibility
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        try:
            prob.solve(solver=cp.CLARABEL, tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol,
                       tol_ktratio=1e-8, max_iter=opts.backend_max_iter)
        except cp.error.SolverError:
            # Clarabel occasionally stalls on badly scaled data; SCS is slower but robust
            prob.solve(solver=cp.SCS, eps_abs=1e-9, eps_rel=1e-9, max_iters=200_000)
    return prob.status


class _ConvexModel:
    """cvxpy model for the loss, linear fairness rows, norm ball and the
    linearized quadratic constraints.  Linearization points enter through
    parameters so repeated CCP solves reuse the compiled problem.
    """

    def __init__(self, loss, omega, y, lin_rows, lin_bounds, quads, lam, opts,
                 extra_linear=()):
        p = omega.shape[1]
        self.b = cp.Variable(p, name="b")
        cons = []
        if math.isfinite(lam):
            # inside ||b|| <= sqrt(lam) these can never bind; dropping them keeps
            # astronomically large thresholds out of the backend
            keep = lin_bounds < math.sqrt(lam) * np.linalg.norm(lin_rows, axis=1)
            lin_rows, lin_bounds = lin_rows[keep], lin_bounds[keep]
            quads = [(Q, d) for Q, d in quads if d < lam * np.linalg.norm(Q, 2)]
        self.objective = _loss_expr(loss, self.b, omega, y, cons)
        if lin_rows.shape[0]:
            expr = lin_rows @ self.b
            cons += [expr <= lin_bounds, -expr <= lin_bounds]
        for g_vec, h_val in extra_linear:
            cons.append(np.asarray(g_vec, float) @ self.b <= float(h_val))
        if math.isfinite(lam):
            cons.append(cp.norm(self.b, 2) <= math.sqrt(lam))
        self.params = []
        for Q, delta in quads:
            if not math.isfinite(delta):
                continue
            qp, qm = dc_split(Q)
            lp, lm = _psd_factor(qp), _psd_factor(qm)
            g_up = cp.Parameter(p)
            c_up = cp.Parameter()
            g_lo = cp.Parameter(p)
            c_lo = cp.Parameter()
            # upper: b Q+ b' - 2 bk Q- b' + bk Q- bk' <= delta
            if lp.shape[1]:
                cons.append(cp.sum_squares(lp.T @ self.b) + g_up @ self.b + c_up <= delta)
            else:
                cons.append(g_up @ self.b + c_up <= delta)
            # lower: b Q- b' - 2 bk Q+ b' + bk Q+ bk' <= delta
            if lm.shape[1]:
                cons.append(cp.sum_squares(lm.T @ self.b) + g_lo @ self.b + c_lo <= delta)
            else:
                cons.append(g_lo @ self.b + c_lo <= delta)
            self.params.append((qp, qm, g_up, c_up, g_lo, c_lo))
        self.problem = cp.Problem(cp.Minimize(self.objective), cons)
        self.opts = opts

    def linearize_at(self, bk):
        for qp, qm, g_up, c_up, g_lo, c_lo in self.params:
            g_up.value = -2.0 * (qm @ bk)
            c_up.value = float(bk @ qm @ bk)
            g_lo.value = -2.0 * (qp @ bk)
            c_lo.value = float(bk @ qp @ bk)

    def solve(self) -> tuple[np.ndarray | None, str]:
        status = _solve(self.problem, self.opts)
        if self.b.value is None:
            return None, status
        return np.array(self.b.value, dtype=float), status


def solve_convex_subproblem(loss: LossSpec, omega, y, linear_constraints=(), extra_linear=(),
                            lam: float = 1e6, opts: SolverOptions | None = None) -> np.ndarray:
    """Minimize the empirical loss subject to ``|a @ b| <= delta`` rows,
    one-sided ``g @ b <= h`` rows and ``||b|| <= sqrt(lam)``.
    """
    opts = opts or SolverOptions()
    omega = np.asarray(omega, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    loss.check_targets(y)
    pairs = [(np.asarray(a, float).ravel(), float(d)) for a, d in linear_constraints
             if math.isfinite(d)]
    rows = np.array([a for a, _ in pairs]).reshape(-1, omega.shape[1])
    bounds = np.array([d for _, d in pairs])
    model = _ConvexModel(loss, omega, y, rows, bounds, [], lam, opts, extra_linear)
    b, status = model.solve()
    if b is None:
        raise SolverError(f"convex subproblem failed with status {status}")
    b = _project_ball(b, lam)
    return _shrink_rows(b, rows, bounds, opts.feas_tol)


def _project_ball(b, lam):
    nb = np.linalg.norm(b)
    if math.isfinite(lam) and nb > math.sqrt(lam):
        b = b * (math.sqrt(lam) / nb)
    return b


def _shrink_rows(b, rows, bounds, tol):
    if not rows.shape[0]:
        return b
    res = np.abs(rows @ b)
    over = res > bounds + 0.5 * tol
    if np.any(over):
        b = b * float(np.min((bounds[over] + 0.25 * tol) / res[over]))
    return b


# --------------------------------------------------------------------------
# FO problems


def _repair(b, problem: FOProblem) -> tuple[np.ndarray, float]:
    """Shrink b until the sample-based check passes; returns (b, max_violation)."""
    cs, tol = problem.constraints, problem.solver_opts.feas_tol
    b = _project_ball(b, problem.lam)
    for _ in range(5):
        res = cs.residuals(b)
        scale = 1.0
        for (m, q, _), r in res.items():
            delta = cs.deltas.get((m, q))
            if delta is None:
                delta = cs._coef_delta(m, q)
            if r > delta + 0.5 * tol:
                scale = min(scale, ((delta + 0.25 * tol) / r) ** (1.0 / q))
        if scale >= 1.0:
            break
        b = b * scale
    return b, cs.max_violation(b)


def _finish(problem, b, iterations, status, history, extra=None, iterates=()) -> FOSolution:
    b, viol = _repair(b, problem)
    omega = problem.omega
    obj = problem.loss.risk(omega @ b, problem.ds.y)
    nb = float(np.linalg.norm(b))
    if status == "optimal" and (viol > problem.solver_opts.feas_tol
                                or nb > math.sqrt(problem.lam) + 1e-8):
        status = "max_iter"
    meta = {
        "level": list(problem.constraints.level),
        "loss": problem.loss.to_dict(),
        "lambda": problem.lam,
        "solver_opts": problem.solver_opts.to_dict(),
        "backend": "cvxpy/CLARABEL",
    }
    meta.update(extra or {})
    rule = DecisionRule(b[None, :], problem.spec, lam=problem.lam)
    return FOSolution(rule, obj, viol, iterations, status, history, meta, list(iterates))


def _convex_path(problem: FOProblem) -> FOSolution:
    cs = problem.constraints
    rows, bounds = cs.linear_rows()
    keep = np.isfinite(bounds)
    model = _ConvexModel(problem.loss, problem.omega, np.asarray(problem.ds.y, float),
                         rows[keep], bounds[keep], [], problem.lam, problem.solver_opts)
    b, status = model.solve()
    if b is None:
        raise SolverError(f"convex path failed with status {status}")
    return _finish(problem, b, 1, "optimal", [problem.loss.risk(problem.omega @ b, problem.ds.y)])


def ccp_solve(problem: FOProblem) -> FOSolution:
    """Convex-concave procedure for level h = 2, starting from b = 0."""
    cs, opts = problem.constraints, problem.solver_opts
    if cs.level[1] != 2:
        raise ContractError("ccp_solve needs a level with h = 2")
    omega, y = problem.omega, np.asarray(problem.ds.y, float)
    rows, bounds = cs.linear_rows()
    keep = np.isfinite(bounds)
    quads = [(Q, d) for Q, d in cs.quad_terms() if math.isfinite(d)]
    model = _ConvexModel(problem.loss, omega, y, rows[keep], bounds[keep], quads,
                         problem.lam, opts)
    bk = np.zeros(omega.shape[1])
    obj_k = problem.loss.risk(omega @ bk, y)
    history, iterates = [obj_k], [bk]
    status, it = "max_iter", 0
    for it in range(1, opts.ccp_max_iter + 1):
        model.linearize_at(bk)
        b_new, solve_status = model.solve()
        if b_new is None:
            if it == 1:
                raise SolverError(f"CCP subproblem infeasible at b = 0 ({solve_status})")
            status = "infeasible_subproblem"
            break
        b_new, _ = _repair(b_new, problem)
        obj_new = problem.loss.risk(omega @ b_new, y)
        if obj_new > obj_k + 1e-9:
            # numerical noise only; keep the monotone sequence and stop
            status = "optimal"
            break
        step = float(np.linalg.norm(b_new - bk))
        bk, obj_k = b_new, obj_new
        history.append(obj_k)
        iterates.append(bk)
        if step <= opts.ccp_step_tol:
            status = "optimal"
            break
    return _finish(problem, bk, it, status, history,
                   {"ccp": {"step_tol": opts.ccp_step_tol, "max_iter": opts.ccp_max_iter,
                            "start": "zero"}}, iterates)


def solve_fo(problem: FOProblem) -> FOSolution:
    g, h = problem.constraints.level
    if h >= 3:
        raise UnsupportedLevelError(f"training at level h={h} is not supported (h <= 2)")
    if h == 2 and problem.constraints.quad_terms():
        return ccp_solve(problem)
    return _convex_path(problem)
