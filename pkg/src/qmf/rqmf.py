"""Regularized quadratic matrix factorization and sensitivity-based tuning.

The objective adds a ridge penalty on the quadratic block,

    sum_i w_i ||x_i - R xi(tau_i)||^2 + lam ||R J||_F^2,

so the ``R`` step becomes ``R = X W T^T (T W T^T + lam J J^T)^{-1}``.  With
``s(lam) = ||R(lam) J||_F^2`` decreasing and convex in ``lam``, a penalty can be
chosen by sensitivity: solve ``s'(lam) = -delta`` by bisection.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .core import FitResult, SolverConfig, _as_data, alternate, init_embedding
from .features import QuadModel, build_T, n_features, selector_J

logger = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-12
LAMBDA_START = 1e-6
LAMBDA_CEILING = 1e12


class SingularSystemError(np.linalg.LinAlgError):
    """``T W T^T`` is singular and no ridge penalty was given."""


def _weights(w, m: int) -> np.ndarray:
    if w is None:
        return np.ones(m)
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape != (m,):
        raise ValueError(f"weights must have length {m}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    return w


def _normal_equations(X, Phi, w):
    X = _as_data(X)
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    T = build_T(Phi)
    w = _weights(w, T.shape[1])
    TW = T * w
    return X, Phi, T, TW @ T.T, X @ TW.T


def _solve_sym(G, Y, lam, d):
    """``Y (G + lam J J^T)^{-1}`` for symmetric ``G``."""
    M = G.copy()
    q0 = 1 + d
    M[q0:, q0:] += lam * np.eye(M.shape[0] - q0)
    try:
        factor = linalg.cho_factor(M, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("T W T^T + lam J J^T is not positive definite") from exc
    if lam == 0:
        ev = linalg.eigvalsh(M)
        if ev[0] <= 1e-14 * ev[-1]:
            raise SingularSystemError("T W T^T is numerically singular")
    return linalg.cho_solve(factor, Y.T).T, M


def solve_R_ridge(X, Phi, lam: float, w=None) -> QuadModel:
    """Minimizer of the weighted, ridge-penalized loss for fixed ``Phi``.

    Parameters
    ----------
    X : array_like, shape (D, m)
    Phi : array_like, shape (d, m)
    lam : float
        Penalty on ``||Q||_F^2``.  ``lam = 0`` requires ``T`` of full row rank.
    w : array_like, shape (m,), optional
        Per-sample weights (the diagonal of ``W``); ones when omitted.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    X, Phi, T, G, Y = _normal_equations(X, Phi, w)
    d = Phi.shape[0]
    R, _ = _solve_sym(G, Y, lam, d)
    return QuadModel.from_R(R, d)


def regularized_loss(X, model: QuadModel, Phi, lam: float, w=None) -> float:
    X = _as_data(X)
    E = X - model.evaluate(Phi)
    w = _weights(w, X.shape[1])
    return float(np.sum(E * E * w) + lam * np.sum(model.Q ** 2))


def _derivative_terms(X, Phi, w, lam):
    if not lam > 0:
        raise ValueError("derivatives of s are defined for lam > 0")
    X, Phi, T, G, Y = _normal_equations(X, Phi, w)
    d = Phi.shape[0]
    R, M = _solve_sym(G, Y, lam, d)
    J = selector_J(d)
    Qt = R @ J
    N = J.T @ linalg.solve(M, J, assume_a="pos")
    return Qt, N


def s_lambda(X, Phi, w, lam: float) -> float:
    """``s(lam) = ||Q(lam)||_F^2``, the energy of the penalized quadratic block."""
    return float(np.sum(solve_R_ridge(X, Phi, lam, w).Q ** 2))


def s_prime(X, Phi, w, lam: float) -> float:
    """``s'(lam) = -2 tr(Q N Q^T)`` with ``N = J^T (T W T^T + lam J J^T)^{-1} J``."""
    Qt, N = _derivative_terms(X, Phi, w, lam)
    return float(-2.0 * np.trace(Qt @ N @ Qt.T))


def s_double_prime(X, Phi, w, lam: float) -> float:
    """``s''(lam) = 6 tr(Q N^2 Q^T)``."""
    Qt, N = _derivative_terms(X, Phi, w, lam)
    return float(6.0 * np.trace(Qt @ N @ N @ Qt.T))


class RidgePath:
    """``s`` and its derivatives for every ``lam`` from one factorization.

    Eliminating the constant and linear blocks leaves
    ``Q(lam) = E (S0 + lam I)^{-1}`` with ``S0`` the Schur complement of the
    linear block in ``T W T^T``.  With ``S0 = V diag(mu) V^T`` and
    ``F = E V``, ``s(lam) = sum F^2 / (mu + lam)^2`` and the derivatives follow
    termwise.
    """

    def __init__(self, X, Phi, w=None):
        X, Phi, T, G, Y = _normal_equations(X, Phi, w)
        k = 1 + Phi.shape[0]
        G11, G12, G22 = G[:k, :k], G[:k, k:], G[k:, k:]
        try:
            factor = linalg.cho_factor(G11, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularSystemError("weighted linear block is singular") from exc
        K = linalg.cho_solve(factor, G12)
        S0 = G22 - G12.T @ K
        S0 = (S0 + S0.T) / 2.0
        mu, V = np.linalg.eigh(S0)
        self.mu = np.maximum(mu, 0.0)
        E = Y[:, k:] - Y[:, :k] @ K
        self.F2 = np.sum((E @ V) ** 2, axis=0)

    def s(self, lam):
        lam = np.asarray(lam, dtype=float)[..., None]
        return np.sum(self.F2 / (self.mu + lam) ** 2, axis=-1)

    def s_prime(self, lam):
        lam = np.asarray(lam, dtype=float)[..., None]
        return -2.0 * np.sum(self.F2 / (self.mu + lam) ** 3, axis=-1)

    def s_double_prime(self, lam):
        lam = np.asarray(lam, dtype=float)[..., None]
        return 6.0 * np.sum(self.F2 / (self.mu + lam) ** 4, axis=-1)

    def solve(self, delta: float, floor: float = LAMBDA_FLOOR) -> "tuple[float, str]":
        """Root of ``s'(lam) = -delta``; returns ``(lam, status)``.

        ``status`` is ``"ok"``, ``"floor"`` when the curve is already flatter
        than ``delta`` at the floor, or ``"ceiling"`` when no root lies below
        :data:`LAMBDA_CEILING`.
        """
        if not delta > 0:
            raise ValueError("delta must be positive")
        if -self.s_prime(floor) <= delta:
            return floor, "floor"
        lo, hi = floor, LAMBDA_START
        while self.s_prime(hi) + delta <= 0:
            lo, hi = hi, hi * 10.0
            if hi > LAMBDA_CEILING:
                logger.warning("s'(lam) = -%g has no root below %g", delta, LAMBDA_CEILING)
                return LAMBDA_CEILING, "ceiling"
        # bisect in log(lam) until the bracket is tight; the stopping test on
        # s' alone leaves lam loose where the curve is flat
        lo_l, hi_l = np.log(lo), np.log(hi)
        mid = hi
        while hi_l - lo_l > 1e-12:
            mid_l = 0.5 * (lo_l + hi_l)
            mid = float(np.exp(mid_l))
            gap = float(self.s_prime(mid)) + delta
            if gap == 0.0:
                break
            if gap < 0:
                lo_l = mid_l
            else:
                hi_l = mid_l
        return mid, "ok"


def tune_lambda(X, Phi, w, delta: float) -> float:
    """Penalty whose sensitivity ``-s'(lam)`` equals ``delta``.

    Returns :data:`LAMBDA_FLOOR` when ``-s'`` is already below ``delta`` there.
    """
    lam, status = RidgePath(X, Phi, w).solve(delta)
    if status == "floor":
        logger.info("s' is flatter than delta=%g at the floor; using lam=%g", delta, lam)
    return lam


@dataclass
class TuningCurve:
    lambda_grid: np.ndarray
    s: np.ndarray
    s_prime: np.ndarray
    s_double_prime: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["lambda", "s", "s_prime", "s_double_prime"])
        for row in zip(self.lambda_grid, self.s, self.s_prime, self.s_double_prime):
            writer.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()


def tuning_curve(X, Phi, w, grid: Sequence[float]) -> TuningCurve:
    path = RidgePath(X, Phi, w)
    grid = np.asarray(grid, dtype=float)
    return TuningCurve(grid, path.s(grid), path.s_prime(grid), path.s_double_prime(grid))


@dataclass(frozen=True)
class RegConfig:
    """Either a fixed penalty ``lam`` or a sensitivity level ``delta``."""

    lam: Optional[float] = None
    delta: Optional[float] = None
    weights: Optional[np.ndarray] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if (self.lam is None) == (self.delta is None):
            raise ValueError("set exactly one of lam and delta")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")


def fit_rqmf(X, d: int, cfg: RegConfig) -> FitResult:
    """Regularized fit; with ``cfg.delta`` the penalty is re-tuned every outer step.

    With a fixed ``lam`` the trace holds the penalized objective; in
    ``delta`` mode it holds the weighted residual ``sum w_i ||x_i - f(tau_i)||^2``.
    """
    X = _as_data(X)
    w = _weights(cfg.weights, X.shape[1])
    if np.count_nonzero(w) < n_features(d):
        logger.warning("fewer positive weights than the %d features", n_features(d))

    def r_step(X, Phi):
        if cfg.delta is not None:
            lam, _ = RidgePath(X, Phi, w).solve(cfg.delta)
        else:
            lam = cfg.lam
        model = solve_R_ridge(X, Phi, lam, w)
        resid = regularized_loss(X, model, Phi, 0.0, w)
        obj = resid if cfg.delta is not None else resid + lam * float(np.sum(model.Q ** 2))
        return model, lam, obj

    return alternate(X, d, r_step, cfg.solver)


def gaussian_kernel(x, y, h: float) -> float:
    """``exp(-||x - y||^2 / (2 h^2))``."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    return float(np.exp(-float(diff @ diff) / (2.0 * h * h)))


def lmf_phi(X, d: int) -> np.ndarray:
    """Latent coordinates of the linear fit, used to anchor tuning diagnostics."""
    return init_embedding(X, d)
