import numpy as np
import pytest

from fairopt.data import dataset_from_arrays


def make_regression(n=200, seed=0, binary_z=True):
    rng = np.random.default_rng(seed)
    if binary_z:
        z = rng.integers(0, 2, n).astype(float)
    else:
        z = rng.standard_normal(n)
    x = np.c_[z + rng.standard_normal(n), rng.standard_normal((n, 2))]
    y = x @ np.array([1.0, 0.5, -0.3]) + 0.5 * rng.standard_normal(n)
    kinds = ["binary"] if binary_z else ["continuous"]
    return dataset_from_arrays(x, y, z, z_kinds=kinds)


def make_classification(n=200, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, n).astype(float)
    x = np.c_[z + rng.standard_normal(n), rng.standard_normal((n, 2))]
    y = np.where(x @ np.array([1.0, 0.7, -0.4]) + 0.5 * rng.standard_normal(n) > 0, 1.0, -1.0)
    return dataset_from_arrays(x, y, z, z_kinds=["binary"], y_kind="binary")


@pytest.fixture
def reg_ds():
    return make_regression()


@pytest.fixture
def clf_ds():
    return make_classification()


# one line per acceptance criterion, appended by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
