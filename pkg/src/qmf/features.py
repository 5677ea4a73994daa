"""Quadratic feature maps and the coefficient block ``R = [c | A | Q]``.

Latent points ``tau`` live in ``R^d``.  The quadratic monomials are ordered
row-major over the upper triangle: ``(0,0), (0,1), ..., (0,d-1), (1,1), ...,
(d-1,d-1)``.  Every serialized ``Q`` depends on this order, so do not change it.

A symmetric tensor is stored densely as an array of shape ``(D, d, d)``; slice
``k`` is the symmetric matrix ``B_k`` with ``B(tau, eta)_k = tau^T B_k eta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not conform."""


class SymmetryError(ValueError):
    """A tensor slice is not symmetric."""


def n_quadratic(d: int) -> int:
    """Number of quadratic monomials, ``(d^2 + d) / 2``."""
    return d * (d + 1) // 2


def n_features(d: int) -> int:
    """Length of ``xi(tau)``, ``(2 + 3d + d^2) / 2``."""
    return 1 + d + n_quadratic(d)


@lru_cache(maxsize=None)
def pair_index(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column index arrays enumerating the pairs ``i <= j``."""
    if d < 1:
        raise DimensionError(f"latent dimension must be >= 1, got {d}")
    rows, cols = np.triu_indices(d)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _pair_lookup(d: int) -> np.ndarray:
    rows, cols = pair_index(d)
    table = np.empty((d, d), dtype=np.intp)
    table[rows, cols] = np.arange(rows.size)
    table[cols, rows] = np.arange(rows.size)
    table.setflags(write=False)
    return table


def pair_position(i: int, j: int, d: int) -> int:
    """Column of ``Q`` (or entry of ``psi``) holding the ``tau_i tau_j`` term."""
    return int(_pair_lookup(d)[i, j])


def psi(tau) -> np.ndarray:
    """All quadratic and interaction monomials of ``tau``.

    >>> psi([2.0, 3.0])
    array([4., 6., 9.])
    """
    tau = np.asarray(tau, dtype=float)
    rows, cols = pair_index(tau.shape[0])
    return tau[rows] * tau[cols]


def xi(tau) -> np.ndarray:
    """Full feature vector ``[1, tau, psi(tau)]``."""
    tau = np.asarray(tau, dtype=float)
    return np.concatenate(([1.0], tau, psi(tau)))


def build_psi(Phi) -> np.ndarray:
    """Stack ``psi`` over the columns of ``Phi`` (shape ``(q, m)``)."""
    Phi = np.asarray(Phi, dtype=float)
    rows, cols = pair_index(Phi.shape[0])
    return Phi[rows] * Phi[cols]


def build_T(Phi) -> np.ndarray:
    """Design matrix ``T(Phi) = [xi(tau_1), ..., xi(tau_m)]``.

    Parameters
    ----------
    Phi : array_like, shape (d, m)
        Latent coordinates, one column per sample.

    Returns
    -------
    ndarray, shape ((2 + 3d + d^2) / 2, m)
    """
    Phi = np.asarray(Phi, dtype=float)
    if Phi.ndim != 2:
        raise DimensionError("Phi must be a 2-D array of shape (d, m)")
    m = Phi.shape[1]
    return np.vstack((np.ones((1, m)), Phi, build_psi(Phi)))


def selector_J(d: int) -> np.ndarray:
    """Constant block ``J = [0 I]^T`` with ``R @ J == Q``."""
    q = n_quadratic(d)
    J = np.zeros((n_features(d), q))
    J[1 + d:, :] = np.eye(q)
    return J


def q_to_tensor(Q, d: int) -> np.ndarray:
    """Symmetric tensor (shape ``(D, d, d)``) represented by ``Q``.

    Off-diagonal coefficients are split in half across ``B_k[i, j]`` and
    ``B_k[j, i]`` so that ``tau^T B_k tau == Q[k] @ psi(tau)``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != n_quadratic(d):
        raise DimensionError(
            f"Q has {Q.shape[1]} columns, expected {n_quadratic(d)} for d={d}")
    rows, cols = pair_index(d)
    B = np.zeros((Q.shape[0], d, d))
    half = np.where(rows == cols, 1.0, 0.5)
    B[:, rows, cols] = Q * half
    B[:, cols, rows] = Q * half
    return B


def tensor_to_q(B) -> np.ndarray:
    """Inverse of :func:`q_to_tensor`; raises ``SymmetryError`` on asymmetric slices."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 3 or B.shape[1] != B.shape[2]:
        raise DimensionError("tensor must have shape (D, d, d)")
    if not np.array_equal(B, np.swapaxes(B, 1, 2)):
        raise SymmetryError("tensor slices must be exactly symmetric")
    rows, cols = pair_index(B.shape[1])
    scale = np.where(rows == cols, 1.0, 2.0)
    return B[:, rows, cols] * scale


def tensor_action(B, eta) -> np.ndarray:
    """``B_eta = [B_1 eta, ..., B_D eta]^T`` of shape ``(D, d)``."""
    B = np.asarray(B, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (B.shape[2],):
        raise DimensionError(f"eta must have shape ({B.shape[2]},)")
    return B @ eta


def tensor_adjoint(B, v) -> np.ndarray:
    """Adjoint ``B^*(v) = sum_k v_k B_k``, a symmetric ``(d, d)`` matrix."""
    B = np.asarray(B, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != (B.shape[0],):
        raise DimensionError(f"v must have shape ({B.shape[0]},)")
    return np.tensordot(v, B, axes=1)


def tensor_apply(B, tau, eta) -> np.ndarray:
    """Bilinear form ``B(tau, eta)`` in ``R^D``."""
    return tensor_action(B, eta) @ np.asarray(tau, dtype=float)


@dataclass(frozen=True)
class QuadModel:
    """Quadratic map ``f(tau) = c + A tau + Q psi(tau)``.

    Attributes
    ----------
    c : ndarray, shape (D,)
    A : ndarray, shape (D, d)
    Q : ndarray, shape (D, (d^2 + d) / 2)
    """

    c: np.ndarray
    A: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim == 1:
            Q = Q.reshape(-1, 1)
        if A.shape[0] != c.shape[0] or Q.shape[0] != c.shape[0]:
            raise DimensionError("c, A and Q must have the same number of rows")
        if Q.shape[1] != n_quadratic(A.shape[1]):
            raise DimensionError(
                f"Q must have {n_quadratic(A.shape[1])} columns for d={A.shape[1]}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)

    @property
    def D(self) -> int:
        return self.c.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def R(self) -> np.ndarray:
        return np.column_stack((self.c, self.A, self.Q))

    @property
    def B(self) -> np.ndarray:
        return q_to_tensor(self.Q, self.d)

    @classmethod
    def from_R(cls, R, d: int) -> "QuadModel":
        R = np.asarray(R, dtype=float)
        if R.shape[1] != n_features(d):
            raise DimensionError(
                f"R has {R.shape[1]} columns, expected {n_features(d)} for d={d}")
        return cls(R[:, 0], R[:, 1:1 + d], R[:, 1 + d:])

    @classmethod
    def from_tensor(cls, c, A, B) -> "QuadModel":
        return cls(c, A, tensor_to_q(B))

    def __call__(self, tau) -> np.ndarray:
        return model_eval(self, tau)

    def evaluate(self, Phi) -> np.ndarray:
        """Evaluate at every column of ``Phi``; returns ``R @ T(Phi)``."""
        return self.R @ build_T(Phi)

    def to_dict(self) -> dict:
        return {"d": self.d, "D": self.D, "c": self.c.tolist(),
                "A": self.A.tolist(), "Q": self.Q.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "QuadModel":
        d, D = int(data["d"]), int(data["D"])
        c = np.asarray(data["c"], dtype=float).reshape(D)
        A = np.asarray(data["A"], dtype=float).reshape(D, d)
        Q = np.asarray(data["Q"], dtype=float).reshape(D, n_quadratic(d))
        return cls(c, A, Q)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "QuadModel":
        return cls.from_dict(json.loads(text))


def model_eval(model: QuadModel, tau) -> np.ndarray:
    """``c + A tau + Q psi(tau)``."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.d,):
        raise DimensionError(f"tau must have shape ({model.d},)")
    return model.c + model.A @ tau + model.Q @ psi(tau)
