import math

import numpy as np
import pytest
from scipy.optimize import linprog

from fairopt.constraints import ConstraintSet, DeltaSchedule, build_constraint_set
from fairopt.data import affine_map, dataset_from_arrays, feature_matrix, standardize
from fairopt.errors import ContractError, UnsupportedLevelError
from fairopt.solvers import (
    FOProblem,
    LossSpec,
    SolverOptions,
    ccp_solve,
    dc_split,
    solve_convex_subproblem,
    solve_fo,
)

from conftest import make_classification, make_regression


def unconstrained_set(ds, spec):
    return ConstraintSet(level=(1, 1), deltas={(1, 1): math.inf}, z=ds.z,
                         omega=feature_matrix(spec, ds.x, ds.z))


# ---------------------------------------------------------------- dc split

def test_dc_split_examples():
    qp, qm = dc_split(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(qp, 0.5 * np.array([[1, 1], [1, 1]]), atol=1e-12)
    np.testing.assert_allclose(qm, 0.5 * np.array([[1, -1], [-1, 1]]), atol=1e-12)
    psd = np.array([[2.0, 0.5], [0.5, 1.0]])
    qp, qm = dc_split(psd)
    np.testing.assert_allclose(qp, psd, atol=1e-12)
    np.testing.assert_allclose(qm, 0, atol=1e-12)
    qp, qm = dc_split(-np.eye(3))
    np.testing.assert_allclose(qp, 0, atol=1e-12)
    np.testing.assert_allclose(qm, np.eye(3), atol=1e-12)


def test_dc_split_random_symmetric():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(size=(5, 5))
        q = 0.5 * (a + a.T)
        qp, qm = dc_split(q)
        np.testing.assert_allclose(qp - qm, q, atol=1e-12)
        assert np.linalg.eigvalsh(qp).min() >= -1e-12
        assert np.linalg.eigvalsh(qm).min() >= -1e-12


def test_dc_split_rejects_asymmetric():
    with pytest.raises(ContractError):
        dc_split(np.array([[0.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------- convex path

def test_least_squares_matches_normal_equations():
    ds = make_regression(n=300, seed=4)
    om = feature_matrix(affine_map(ds.p_x), ds.x)
    b = solve_convex_subproblem(LossSpec("squared"), om, ds.y, lam=1e8)
    b_ref = np.linalg.solve(om.T @ om, om.T @ ds.y)
    obj = np.mean((ds.y - om @ b) ** 2)
    ref = np.mean((ds.y - om @ b_ref) ** 2)
    assert abs(obj - ref) <= 1e-6 * ref
    np.testing.assert_allclose(b, b_ref, atol=1e-5)


def test_norm_ball_is_active():
    om = np.ones((10, 1))
    y = np.full(10, 3.0)
    b = solve_convex_subproblem(LossSpec("squared"), om, y, lam=1.0)
    assert abs(np.linalg.norm(b) - 1.0) <= 1e-6


def test_linear_rows_respected():
    ds = make_regression(n=200, seed=5)
    om = feature_matrix(affine_map(ds.p_x), ds.x)
    a = np.array([0.0, 1.0, 0.0, 0.0])
    b = solve_convex_subproblem(LossSpec("squared"), om, ds.y, [(a, 0.1)], lam=1e6)
    assert abs(a @ b) <= 0.1 + 1e-8
    g = np.array([0.0, 0.0, 1.0, 0.0])
    b = solve_convex_subproblem(LossSpec("squared"), om, ds.y, extra_linear=[(g, -0.2)], lam=1e6)
    assert g @ b <= -0.2 + 1e-8


def _lp_reference(loss, om, y):
    n, p = om.shape
    cost = np.r_[np.zeros(p), np.ones(n) / n]
    rows, rhs = [], []
    if loss.kind == "hinge":
        # s_i >= 1 - y_i w_i b
        rows.append(np.c_[-(y[:, None] * om), -np.eye(n)])
        rhs.append(-np.ones(n))
    else:
        rows.append(np.c_[loss.over_cost * om, -np.eye(n)])
        rhs.append(loss.over_cost * y)
        rows.append(np.c_[-loss.under_cost * om, -np.eye(n)])
        rhs.append(-loss.under_cost * y)
    bounds = [(None, None)] * p + [(0, None)] * n
    res = linprog(cost, A_ub=np.vstack(rows), b_ub=np.concatenate(rhs), bounds=bounds,
                  method="highs")
    assert res.status == 0
    return res.fun


@pytest.mark.parametrize("kind", ["hinge", "pinball"])
def test_piecewise_losses_match_lp(kind):
    ds = make_classification(n=150, seed=7) if kind == "hinge" else make_regression(n=150, seed=7)
    om = feature_matrix(affine_map(ds.p_x), ds.x)
    loss = LossSpec(kind)
    b = solve_convex_subproblem(loss, om, ds.y, lam=1e6)
    ref = _lp_reference(loss, om, ds.y)
    assert abs(loss.risk(om @ b, ds.y) - ref) <= 1e-6 * max(ref, 1e-12)


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("pinball", 0.0, 0.0)
    with pytest.raises(ValueError):
        LossSpec("logistic")
    with pytest.raises(ValueError):
        LossSpec("hinge").check_targets(np.array([0.0, 1.0]))


# ------------------------------------------------------------- FO problems

def test_zero_threshold_with_dependent_sample_gives_zero_rule():
    rng = np.random.default_rng(8)
    x = (rng.random(400) < 0.4).astype(float)
    y = 2.0 * x + rng.normal(size=400)
    ds = dataset_from_arrays(x, y, x, x_kinds=["binary"], z_kinds=["binary"])
    spec = affine_map(1, constant=False)  # B in R acting on x alone
    cs = build_constraint_set(ds, spec, (2, 2), DeltaSchedule.epsilon(0.0))
    sol = solve_fo(FOProblem(ds, spec, LossSpec("squared"), cs, lam=100))
    assert abs(sol.b[0, 0]) <= 1e-6
    assert sol.max_violation <= 1e-8


def test_huge_epsilon_reproduces_unconstrained(reg_ds):
    train, _ = standardize(reg_ds)
    spec = affine_map(train.p_x)
    base = solve_fo(FOProblem(train, spec, LossSpec("squared"), unconstrained_set(train, spec), 100))
    for level in [(1, 1), (2, 2)]:
        cs = build_constraint_set(train, spec, level, DeltaSchedule.epsilon(1e6))
        sol = solve_fo(FOProblem(train, spec, LossSpec("squared"), cs, 100))
        assert abs(sol.objective - base.objective) <= 1e-6 * base.objective


def test_ccp_one_dimensional_fixture():
    n = 10
    # omega = 1 for every row, so the risk is (B - 1)^2
    ds = dataset_from_arrays(np.ones((n, 1)), np.ones(n), np.arange(n) % 2)
    spec = affine_map(1, constant=False)
    cs = ConstraintSet.from_coefficients(quadratic=[(np.array([[1.0]]), 0.25)])
    sol = ccp_solve(FOProblem(ds, spec, LossSpec("squared"), cs, lam=100))
    assert sol.b[0, 0] == pytest.approx(0.5, abs=1e-5)
    assert sol.status == "optimal"


def test_ccp_indefinite_fixture_descent_and_feasibility():
    n = 8
    ds = dataset_from_arrays(np.eye(2)[np.arange(n) % 2] * np.sqrt(2), np.zeros(n) + 1.0,
                             np.arange(n) % 2)
    spec = affine_map(2, constant=False)
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    cs = ConstraintSet.from_coefficients(quadratic=[(q, 0.1)])
    sol = ccp_solve(FOProblem(ds, spec, LossSpec("squared"), cs, lam=100))
    hist = sol.history
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))
    for b in sol.iterates:
        assert abs(b @ q @ b) <= 0.1 + 1e-8
    assert sol.objective < hist[0]


@pytest.mark.parametrize("level", [(1, 2), (2, 2)])
def test_ccp_on_data_is_monotone_and_feasible(level):
    ds = make_regression(n=150, seed=11, binary_z=False)
    train, _ = standardize(ds)
    spec = affine_map(train.p_x)
    cs = build_constraint_set(train, spec, level, DeltaSchedule.epsilon(0.3))
    sol = solve_fo(FOProblem(train, spec, LossSpec("squared"), cs, lam=100))
    assert sol.max_violation <= 1e-8
    assert all(b <= a + 1e-9 for a, b in zip(sol.history, sol.history[1:]))
    for b in sol.iterates:
        assert cs.max_violation(b) <= 1e-8
    assert np.linalg.norm(sol.b) <= 10 + 1e-8


def test_zero_quadratics_fall_back_to_convex_path(reg_ds):
    train, _ = standardize(reg_ds)
    spec = affine_map(train.p_x)
    n = train.n
    const = dataset_from_arrays(train.x, train.y, np.ones(n), z_kinds=["continuous"])
    cs2 = build_constraint_set(const, spec, (1, 2), DeltaSchedule.epsilon(0.1))
    cs1 = build_constraint_set(const, spec, (1, 1), DeltaSchedule.epsilon(0.1))
    assert not cs2.quad_terms()
    s2 = solve_fo(FOProblem(const, spec, LossSpec("squared"), cs2, 100))
    s1 = solve_fo(FOProblem(const, spec, LossSpec("squared"), cs1, 100))
    assert s2.objective == pytest.approx(s1.objective, rel=1e-12)


def test_slack_quadratic_matches_linear_only():
    ds = make_regression(n=200, seed=12, binary_z=False)
    train, _ = standardize(ds)
    spec = affine_map(train.p_x)
    table = {"1,1": 0.01, "1,2": 1e6}
    cs2 = build_constraint_set(train, spec, (1, 2), DeltaSchedule("manual", {"table": table}))
    cs1 = build_constraint_set(train, spec, (1, 1), DeltaSchedule("manual", {"table": table}))
    s2 = solve_fo(FOProblem(train, spec, LossSpec("squared"), cs2, 100))
    s1 = solve_fo(FOProblem(train, spec, LossSpec("squared"), cs1, 100))
    assert s2.objective == pytest.approx(s1.objective, rel=1e-6)


@pytest.mark.parametrize("kind", ["squared", "hinge", "pinball"])
def test_objective_monotone_in_epsilon(kind):
    ds = make_classification(n=200, seed=13) if kind == "hinge" else make_regression(n=200, seed=13)
    train, _ = standardize(ds)
    spec = affine_map(train.p_x)
    objs = []
    for eps in [10, 1, 0.1, 0.01]:
        cs = build_constraint_set(train, spec, (1, 1), DeltaSchedule.epsilon(eps))
        objs.append(solve_fo(FOProblem(train, spec, LossSpec(kind), cs, 100)).objective)
    assert all(b >= a - 1e-7 for a, b in zip(objs, objs[1:]))


def test_higher_q_levels_not_trainable(reg_ds):
    spec = affine_map(reg_ds.p_x)
    cs = build_constraint_set(reg_ds, spec, (1, 3), DeltaSchedule.epsilon(0.1))
    assert not cs.solvable
    with pytest.raises(UnsupportedLevelError):
        solve_fo(FOProblem(reg_ds, spec, LossSpec("squared"), cs, 100))
    # evaluation of the q = 3 residual is still available
    assert (1, 3, None) in cs.residuals(np.ones(spec.p))


def test_solution_invariants_and_determinism(clf_ds):
    train, _ = standardize(clf_ds)
    spec = affine_map(train.p_x)
    cs = build_constraint_set(train, spec, (1, 2), DeltaSchedule.epsilon(0.2))
    prob = FOProblem(train, spec, LossSpec("hinge"), cs, lam=4.0, solver_opts=SolverOptions())
    a, b = solve_fo(prob), solve_fo(prob)
    assert np.array_equal(a.b, b.b)
    if a.status == "optimal":
        assert a.max_violation <= 1e-8
        assert np.linalg.norm(a.b) <= 2.0 + 1e-8


def test_lambda_below_one_rejected(reg_ds):
    spec = affine_map(reg_ds.p_x)
    cs = build_constraint_set(reg_ds, spec, (1, 1), DeltaSchedule.epsilon(0.1))
    with pytest.raises(ValueError):
        FOProblem(reg_ds, spec, LossSpec("squared"), cs, lam=0.5)
