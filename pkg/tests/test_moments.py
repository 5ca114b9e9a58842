import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairopt.errors import LevelLimitError, NumericError
from fairopt.moments import (
    MomentTensor,
    constraint_residual_generic,
    linear_coef_tensor,
    linf_norm,
    quad_coef_family,
    residual_tensor_generic,
    z_power_moment,
)


def test_z_power_moment_examples():
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(z_power_moment(z, 1).array, [0.5, 0.5])
    np.testing.assert_array_equal(z_power_moment(z, 2).array, [[0.5, 0], [0, 0.5]])
    const = np.full((7, 2), 1.5)
    np.testing.assert_allclose(z_power_moment(const, 3).array, np.full((2, 2, 2), 1.5**3))


def test_level_limits():
    with pytest.raises(LevelLimitError):
        z_power_moment(np.ones((3, 2)), 4, max_level=3)
    with pytest.raises(LevelLimitError):
        linear_coef_tensor(np.ones((3, 10)), np.ones((3, 5)), 3, max_entries=1000)


def test_linf_norm():
    assert linf_norm(np.zeros((2, 2))) == 0
    assert linf_norm(np.array([-3.0, 2.0])) == 3
    assert linf_norm(np.array([[-0.25, 0.25], [0, 0]])) == 0.25
    with pytest.raises(NumericError):
        linf_norm(np.array([1.0, np.nan]))
    with pytest.raises(NumericError):
        MomentTensor(np.array([np.inf]))


def test_linear_coef_hand_example():
    c = linear_coef_tensor([0.0, 1.0], [[1.0], [-1.0]], 1)
    np.testing.assert_allclose(c.c, [[-0.5]])


def test_constant_z_gives_zero():
    rng = np.random.default_rng(0)
    om = rng.normal(size=(20, 3))
    z = np.full(20, 2.0)
    assert np.all(linear_coef_tensor(z, om, 1).c == 0)
    assert np.all(quad_coef_family(z, om, 2).q_mats == 0)


def test_binary_z_m2_equals_m1():
    rng = np.random.default_rng(1)
    z = rng.integers(0, 2, 30).astype(float)
    om = rng.normal(size=(30, 3))
    c1 = linear_coef_tensor(z, om, 1).c
    c2 = linear_coef_tensor(z, om, 2).c
    np.testing.assert_array_equal(c2.reshape(-1, 3)[0], c1[0])


def test_quad_coef_hand_example():
    q = quad_coef_family([0.0, 1.0], np.eye(2), 1)
    np.testing.assert_allclose(q.q_mats[0], np.diag([-0.25, 0.25]))


def test_quad_matrices_symmetric():
    rng = np.random.default_rng(2)
    q = quad_coef_family(rng.normal(size=(15, 2)), rng.normal(size=(15, 4)), 2)
    mats = q.matrices()
    assert np.array_equal(mats, mats.transpose(0, 2, 1))


def test_generic_zero_rule():
    rng = np.random.default_rng(3)
    for m, q in [(1, 1), (2, 3), (3, 2)]:
        assert constraint_residual_generic(np.zeros(3), rng.normal(size=(12, 2)),
                                           rng.normal(size=(12, 3)), m, q) == 0


def test_generic_budget():
    with pytest.raises(LevelLimitError):
        constraint_residual_generic(np.ones((3, 2)), np.ones((4, 10)), np.ones((4, 2)), 4, 3,
                                    max_entries=10_000)


fixture = st.tuples(
    st.integers(2, 50), st.integers(1, 4), st.integers(1, 2), st.integers(0, 2**31 - 1)
)


@settings(max_examples=100, deadline=None)
@given(fixture, st.integers(1, 3))
def test_coefficient_paths_match_generic(fx, m):
    n, p, r, seed = fx
    rng = np.random.default_rng(seed)
    z, om, b = rng.normal(size=(n, r)), rng.normal(size=(n, p)), rng.normal(size=p)
    lin = linear_coef_tensor(z, om, m).residual(b)
    quad = quad_coef_family(z, om, m).residual(b)
    assert abs(lin - constraint_residual_generic(b, z, om, m, 1)) <= 1e-10 * max(1.0, lin)
    assert abs(quad - constraint_residual_generic(b, z, om, m, 2)) <= 1e-10 * max(1.0, quad)


@settings(max_examples=50, deadline=None)
@given(fixture, st.integers(1, 3), st.floats(-5, 5, allow_nan=False))
def test_homogeneity(fx, q, c):
    n, p, r, seed = fx
    rng = np.random.default_rng(seed)
    z, om, b = rng.normal(size=(n, r)), rng.normal(size=(n, p)), rng.normal(size=p)
    base = constraint_residual_generic(b, z, om, 2, q)
    scaled = constraint_residual_generic(c * b, z, om, 2, q)
    assert scaled == pytest.approx(abs(c) ** q * base, rel=1e-10, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(fixture, st.floats(-3, 3), st.floats(-3, 3))
def test_linear_at_q1(fx, a, c):
    n, p, r, seed = fx
    rng = np.random.default_rng(seed)
    z, om = rng.normal(size=(n, r)), rng.normal(size=(n, p))
    b1, b2 = rng.normal(size=p), rng.normal(size=p)
    lhs = residual_tensor_generic(a * b1 + c * b2, z, om, 2, 1)
    rhs = a * residual_tensor_generic(b1, z, om, 2, 1) + c * residual_tensor_generic(b2, z, om, 2, 1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


def test_row_permutation_invariance():
    rng = np.random.default_rng(5)
    z, om = rng.normal(size=(40, 2)), rng.normal(size=(40, 3))
    perm = rng.permutation(40)
    np.testing.assert_allclose(linear_coef_tensor(z, om, 2).c, linear_coef_tensor(z[perm], om[perm], 2).c,
                               atol=1e-13)
    np.testing.assert_allclose(quad_coef_family(z, om, 1).q_mats,
                               quad_coef_family(z[perm], om[perm], 1).q_mats, atol=1e-13)


def test_sums_are_reproducible():
    rng = np.random.default_rng(6)
    z, om = rng.normal(size=(500, 2)), rng.normal(size=(500, 4))
    a = linear_coef_tensor(z, om, 2).c
    b = linear_coef_tensor(z.copy(), om.copy(), 2).c
    assert np.array_equal(a, b)
