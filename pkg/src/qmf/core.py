"""Quadratic matrix factorization by alternating minimization.

Fits ``X ~ R T(Phi)`` under the constraints ``Phi Phi^T = I_d`` and
``Phi 1_m = 0``.  Each outer iteration solves for ``R`` with ``Phi`` fixed,
projects every column of ``X`` onto the fitted surface, and re-imposes the
constraints on the new latent coordinates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .features import QuadModel, build_T, n_features, n_quadratic
from .projection import DEFAULT_MAX_ITER, DEFAULT_TOL, _loss_batch, project_batch

logger = logging.getLogger(__name__)


class RankDeficiencyError(np.linalg.LinAlgError):
    """The centered data has fewer than ``d`` nonzero principal directions."""


class RankCollapseError(np.linalg.LinAlgError):
    """Updated latent coordinates lost rank; the constraints cannot be restored."""


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules for the outer loop and the inner projections."""

    eps: float = 1e-6
    max_outer: int = 100
    inner_tol: float = DEFAULT_TOL
    inner_max_iter: int = DEFAULT_MAX_ITER
    warm_start: bool = True

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not self.inner_tol > 0 or self.inner_max_iter < 1:
            raise ValueError("inner_tol must be positive and inner_max_iter >= 1")


@dataclass
class FitResult:
    model: QuadModel
    embedding: np.ndarray
    loss_trace: list[float]
    iterations: int
    converged: bool
    interpolation: bool = False
    lambdas: list[float] = field(default_factory=list)
    grad_norms: Optional[np.ndarray] = None

    @property
    def fitted(self) -> np.ndarray:
        return self.model.evaluate(self.embedding)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "Phi": np.asarray(self.embedding).tolist(),
            "loss_trace": [float(v) for v in self.loss_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "interpolation": self.interpolation,
            "lambdas": [float(v) for v in self.lambdas],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        return cls(model=QuadModel.from_dict(data["model"]),
                   embedding=np.asarray(data["Phi"], dtype=float),
                   loss_trace=list(data["loss_trace"]),
                   iterations=int(data["iterations"]),
                   converged=bool(data["converged"]),
                   interpolation=bool(data.get("interpolation", False)),
                   lambdas=list(data.get("lambdas", [])))


def _as_data(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be a (D, m) array with m >= 1")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite entries")
    return X


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # rows of V; make the largest-magnitude entry of each row positive
    idx = np.argmax(np.abs(V), axis=1)
    signs = np.sign(V[np.arange(V.shape[0]), idx])
    signs[signs == 0] = 1.0
    return V * signs[:, None]


def init_embedding(X, d: int) -> np.ndarray:
    """Top-``d`` eigenvectors (as rows) of the centered Gram matrix ``Xc^T Xc``."""
    X = _as_data(X)
    m = X.shape[1]
    if not 1 <= d < m:
        raise ValueError(f"need 1 <= d < m, got d={d}, m={m}")
    Xc = X - X.mean(axis=1, keepdims=True)
    w, V = np.linalg.eigh(Xc.T @ Xc)
    w, V = w[::-1], V[:, ::-1]
    if w[0] <= 0 or w[d - 1] <= 1e-12 * w[0]:
        raise RankDeficiencyError(
            f"centered data has fewer than {d} nonzero principal directions")
    return _fix_signs(V[:, :d].T.copy())


def loss(X, R, Phi) -> float:
    """``||X - R T(Phi)||_F^2``; ``R`` may be a :class:`QuadModel` or an array."""
    Rm = R.R if isinstance(R, QuadModel) else np.asarray(R, dtype=float)
    E = np.asarray(X, dtype=float) - Rm @ build_T(Phi)
    return float(np.sum(E * E))


def solve_R(X, Phi) -> QuadModel:
    """Least-squares coefficients ``X T^T (T T^T)^+`` (minimum-norm when rank deficient)."""
    X = _as_data(X)
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    T = build_T(Phi)
    R = np.linalg.lstsq(T.T, X.T, rcond=None)[0].T
    return QuadModel.from_R(R, Phi.shape[0])


def orthonormalize(Phi_tilde) -> np.ndarray:
    """Center the rows, then whiten: ``(Pc Pc^T)^{-1/2} Pc``.

    The result has orthonormal rows orthogonal to ``1_m`` and spans the same
    row space as the centered input.
    """
    P = np.atleast_2d(np.asarray(Phi_tilde, dtype=float))
    Pc = P - P.mean(axis=1, keepdims=True)
    w, V = np.linalg.eigh(Pc @ Pc.T)
    if not np.all(np.isfinite(w)) or w[0] < 1e-14 * max(w[-1], 1.0):
        raise RankCollapseError("latent coordinates are degenerate")
    Z = (V / np.sqrt(w)) @ V.T
    return Z @ Pc


def subspace_gap(Phi_a, Phi_b) -> float:
    """Spectral norm ``||Phi_a^T Phi_a - Phi_b^T Phi_b||`` for orthonormal-row inputs.

    Equals the sine of the largest principal angle between the row spaces,
    computed from the ``d x m`` residual of ``Phi_b`` against ``Phi_a``.
    """
    Pa = np.atleast_2d(np.asarray(Phi_a, dtype=float))
    Pb = np.atleast_2d(np.asarray(Phi_b, dtype=float))
    E = Pb - (Pb @ Pa.T) @ Pa
    return float(min(np.linalg.norm(E, ord=2), 1.0))


# ---------------------------------------------------------------------------
# shared outer loop

# (X, Phi) -> (model, lambda used, objective value)
RStep = Callable[[np.ndarray, np.ndarray], "tuple[QuadModel, float, float]"]


def alternate(X: np.ndarray, d: int, r_step: RStep, cfg: SolverConfig,
              Phi0: Optional[np.ndarray] = None) -> FitResult:
    """Outer alternating loop shared by the plain and regularized fits."""
    m = X.shape[1]
    Phi = init_embedding(X, d) if Phi0 is None else np.asarray(Phi0, dtype=float)
    model, lam, obj = r_step(X, Phi)
    trace, lambdas = [obj], [lam]
    converged = False
    grad_norms = None
    it = 0
    for it in range(1, cfg.max_outer + 1):
        start = Phi if cfg.warm_start else np.zeros_like(Phi)
        proj = project_batch(model, X, init=start, tol=cfg.inner_tol,
                             max_iter=cfg.inner_max_iter)
        Phi_tilde = proj.tau
        if cfg.warm_start:
            base = (X - model.c[:, None]).T
            old = _loss_batch(base, model.A, model.Q, Phi.T)
            worse = proj.loss > old
            if np.any(worse):
                Phi_tilde = Phi_tilde.copy()
                Phi_tilde[:, worse] = Phi[:, worse]
        grad_norms = proj.grad_norm
        Phi_new = orthonormalize(Phi_tilde)
        gap = subspace_gap(Phi, Phi_new)
        Phi = Phi_new
        model, lam, obj = r_step(X, Phi)
        trace.append(obj)
        lambdas.append(lam)
        logger.debug("outer %d: objective %.6g gap %.3g", it, obj, gap)
        if gap <= cfg.eps:
            converged = True
            break
    return FitResult(model=model, embedding=Phi, loss_trace=trace, iterations=it,
                     converged=converged, interpolation=m <= n_features(d),
                     lambdas=lambdas, grad_norms=grad_norms)


def fit_qmf(X, d: int, cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Unregularized quadratic matrix factorization.

    ``loss_trace[t]`` is ``loss(X, R_{t+1}, Phi_t)``, which never increases.
    """
    X = _as_data(X)
    if X.shape[1] <= n_features(d):
        logger.warning("m=%d <= %d features: interpolation regime", X.shape[1], n_features(d))

    def r_step(X, Phi):
        model = solve_R(X, Phi)
        return model, 0.0, loss(X, model, Phi)

    return alternate(X, d, r_step, cfg)


def fit_lmf(X, d: int, cfg: SolverConfig = SolverConfig()) -> FitResult:
    """Linear matrix factorization, the ``Q = 0`` restriction.

    The same outer loop with ``T`` reduced to ``[1_m; Phi]`` and linear
    projections.  Its fixed point is affine PCA, which the eigenvector start
    already attains.
    """
    X = _as_data(X)
    D = X.shape[0]
    Phi = init_embedding(X, d)
    zeros = np.zeros((D, n_quadratic(d)))

    def r_step(Phi):
        T = np.vstack((np.ones((1, Phi.shape[1])), Phi))
        R = np.linalg.lstsq(T.T, X.T, rcond=None)[0].T
        model = QuadModel(R[:, 0], R[:, 1:], zeros)
        E = X - R @ T
        return model, float(np.sum(E * E))

    model, obj = r_step(Phi)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        Phi_tilde = np.linalg.lstsq(model.A, X - model.c[:, None], rcond=None)[0]
        Phi_new = orthonormalize(Phi_tilde)
        gap = subspace_gap(Phi, Phi_new)
        Phi = Phi_new
        model, obj = r_step(Phi)
        trace.append(obj)
        if gap <= cfg.eps:
            converged = True
            break
    return FitResult(model=model, embedding=Phi, loss_trace=trace, iterations=it,
                     converged=converged, interpolation=X.shape[1] <= d + 1)
