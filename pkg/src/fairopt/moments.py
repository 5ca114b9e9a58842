"""Empirical moment tensors and the coefficient tensors of the FO constraints.

For a scalar rule ``s = b @ omega`` the (m, q) constraint compares the joint
moment ``E_n[Z^{(x)m} s^q]`` with the product ``E_n[Z^{(x)m}] E_n[s^q]``.
With q = 1 the difference is linear in ``b`` (a coefficient tensor ``c``
of shape ``(r,)*m + (p,)``); with q = 2 it is a quadratic form in ``b``
(one symmetric p x p matrix per multi-index of Z).

Sample means are accumulated sequentially in dataset order so results are
bit-reproducible for a given row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LevelLimitError, NumericError, ShapeError

MAX_ENTRIES = 10**6


def _ordered_mean(a: np.ndarray) -> np.ndarray:
    # cumsum accumulates strictly in row order (np.sum would use pairwise summation)
    return np.cumsum(a, axis=0)[-1] / a.shape[0]


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix of samples, got shape {a.shape}")
    return a


def _check_budget(entries: int, max_entries: int | None, what: str):
    limit = MAX_ENTRIES if max_entries is None else max_entries
    if entries > limit:
        raise LevelLimitError(
            f"{what} needs {entries} tensor entries (budget {limit}); use a lower level"
        )


def tensor_power_rows(a: np.ndarray, m: int) -> np.ndarray:
    """Row-wise m-fold outer power: returns n x k^m with row-major multi-indices."""
    n = a.shape[0]
    out = np.ones((n, 1))
    for _ in range(m):
        out = (out[:, :, None] * a[:, None, :]).reshape(n, -1)
    return out


@dataclass(frozen=True)
class MomentTensor:
    array: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise NumericError("moment tensor has non-finite entries")
        object.__setattr__(self, "array", arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def entries(self) -> np.ndarray:
        return self.array.ravel()


def linf_norm(t) -> float:
    a = t.array if isinstance(t, MomentTensor) else np.asarray(t, dtype=float)
    if np.any(np.isnan(a)):
        raise NumericError("NaN entry in tensor")
    return float(np.max(np.abs(a), initial=0.0))


def z_power_moment(z, m: int, *, max_level: int | None = None,
                   max_entries: int | None = None) -> MomentTensor:
    """``E_n[Z^{(x)m}]`` as a tensor of shape ``(r,)*m``."""
    z = _as_matrix(z)
    if m < 1:
        raise ValueError("m must be >= 1")
    if max_level is not None and m > max_level:
        raise LevelLimitError(f"m={m} exceeds configured max level {max_level}")
    r = z.shape[1]
    _check_budget(r**m, max_entries, f"Z power m={m}")
    return MomentTensor(_ordered_mean(tensor_power_rows(z, m)).reshape((r,) * m))


@dataclass(frozen=True)
class LinearCoefTensor:
    """Coefficients of the q = 1 constraint: residual tensor = ``c @ b``."""

    m: int
    c: np.ndarray

    @property
    def r(self) -> int:
        return self.c.shape[0]

    @property
    def p(self) -> int:
        return self.c.shape[-1]

    def rows(self) -> np.ndarray:
        """One coefficient vector per multi-index of Z, shape (r^m, p)."""
        return self.c.reshape(-1, self.p)

    def residual(self, b) -> float:
        return linf_norm(self.rows() @ np.asarray(b, dtype=float).ravel())


@dataclass(frozen=True)
class QuadCoefFamily:
    """Coefficients of the q = 2 constraint: residual entry sigma = ``b Q_sigma b^T``."""

    m: int
    q_mats: np.ndarray

    @property
    def p(self) -> int:
        return self.q_mats.shape[-1]

    def matrices(self) -> np.ndarray:
        return self.q_mats.reshape(-1, self.p, self.p)

    def residual(self, b) -> float:
        b = np.asarray(b, dtype=float).ravel()
        return linf_norm(np.einsum("i,kij,j->k", b, self.matrices(), b))


def linear_coef_tensor(z, omega, m: int, *, max_entries: int | None = None) -> LinearCoefTensor:
    """``c[sigma] = E_n[prod_k Z_sigma_k * Omega] - E_n[prod_k Z_sigma_k] E_n[Omega]``."""
    z, omega = _as_matrix(z), _as_matrix(omega)
    if z.shape[0] != omega.shape[0]:
        raise ShapeError("z and omega row counts differ")
    if m < 1:
        raise ValueError("m must be >= 1")
    r, p = z.shape[1], omega.shape[1]
    _check_budget(r**m * p, max_entries, f"linear coefficients m={m}")
    zp = tensor_power_rows(z, m)
    joint = _ordered_mean(zp[:, :, None] * omega[:, None, :])
    prod = _ordered_mean(zp)[:, None] * _ordered_mean(omega)[None, :]
    return LinearCoefTensor(m, (joint - prod).reshape((r,) * m + (p,)))


def quad_coef_family(z, omega, m: int, *, max_entries: int | None = None) -> QuadCoefFamily:
    """``Q_sigma = sym(E_n[prod Z_sigma * Omega Omega^T] - E_n[prod Z_sigma] E_n[Omega Omega^T])``."""
    z, omega = _as_matrix(z), _as_matrix(omega)
    if z.shape[0] != omega.shape[0]:
        raise ShapeError("z and omega row counts differ")
    if m < 1:
        raise ValueError("m must be >= 1")
    n, r, p = z.shape[0], z.shape[1], omega.shape[1]
    _check_budget(r**m * p * p, max_entries, f"quadratic coefficients m={m}")
    zp = tensor_power_rows(z, m)
    outer = (omega[:, :, None] * omega[:, None, :]).reshape(n, p * p)
    joint = _ordered_mean(zp[:, :, None] * outer[:, None, :])
    prod = _ordered_mean(zp)[:, None] * _ordered_mean(outer)[None, :]
    q = (joint - prod).reshape(-1, p, p)
    q = 0.5 * (q + q.transpose(0, 2, 1))
    return QuadCoefFamily(m, q.reshape((r,) * m + (p, p)))


def residual_tensor_generic(b, z, omega, m: int, q: int, *,
                            max_entries: int | None = None) -> np.ndarray:
    """Signed joint-minus-product tensor for the rule ``V = omega @ b^T``.

    Computed directly from the samples, with no use of coefficient tensors.
    Shape is ``(r,)*m + (d,)*q``.
    """
    b = np.atleast_2d(np.asarray(getattr(b, "b", b), dtype=float))
    z, omega = _as_matrix(z), _as_matrix(omega)
    if omega.shape[1] != b.shape[1]:
        raise ShapeError(f"omega has {omega.shape[1]} columns, b has {b.shape[1]}")
    if m < 1 or q < 1:
        raise ValueError("m and q must be >= 1")
    r, d = z.shape[1], b.shape[0]
    _check_budget(r**m * d**q, max_entries, f"residual tensor (m={m}, q={q})")
    v = omega @ b.T
    zp = tensor_power_rows(z, m)
    vp = tensor_power_rows(v, q)
    joint = _ordered_mean(zp[:, :, None] * vp[:, None, :])
    prod = _ordered_mean(zp)[:, None] * _ordered_mean(vp)[None, :]
    return (joint - prod).reshape((r,) * m + (d,) * q)


def constraint_residual_generic(b, z, omega, m: int, q: int, *,
                                max_entries: int | None = None) -> float:
    """l-infinity norm of the (m, q) joint-minus-product moment tensor."""
    return linf_norm(residual_tensor_generic(b, z, omega, m, q, max_entries=max_entries))
