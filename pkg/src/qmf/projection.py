"""Projection of a point onto a quadratic surface.

Minimizes the non-convex loss ``h(tau) = ||x - c - A tau - B(tau, tau)||^2`` by
alternating exact minimization of the symmetric surrogate

    g(tau, eta) = 1/2 ||x - c - A tau - B(tau, eta)||^2
                + 1/2 ||x - c - A eta - B(tau, eta)||^2,

whose partial minimizers are closed form: ``tau = Gamma_eta^{-1} zeta_eta``.
:func:`project_batch` runs the same iteration for many targets that share one
surface; it is the kernel used inside the factorization loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import (DimensionError, QuadModel, build_psi, q_to_tensor, tensor_adjoint,
                       tensor_to_q)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
RCOND_MIN = 1e-14


class SingularGammaError(np.linalg.LinAlgError):
    """The d x d system ``Gamma_eta tau = zeta_eta`` is numerically singular."""


@dataclass(frozen=True)
class ProjectionProblem:
    """One projection instance: target ``x`` and surface ``(c, A, B)``.

    ``B`` is the symmetric tensor of shape ``(D, d, d)``.
    """

    x: np.ndarray
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1, 1)
        D, d = A.shape
        if x.shape != (D,) or c.shape != (D,) or B.shape != (D, d, d):
            raise DimensionError("x, c, A, B do not conform")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def from_model(cls, model: QuadModel, x) -> "ProjectionProblem":
        return cls(x, model.c, model.A, model.B)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def D(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ProjectionResult:
    tau: np.ndarray
    eta: np.ndarray
    iterations: int
    converged: bool
    loss: float
    grad_norm: float
    max_norm: float  # largest ||tau_s||, ||eta_s|| seen; feeds certificate()


@dataclass(frozen=True)
class ConvexityCertificate:
    b: float
    b0: float
    alpha: float
    sigma_d_A: float
    satisfied: bool


def _residual(p: ProjectionProblem, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    return p.x - p.c - p.A @ tau - (p.B @ tau) @ tau


def loss_h(p: ProjectionProblem, tau) -> float:
    """Squared distance from ``x`` to the surface point at ``tau``."""
    r = _residual(p, tau)
    return float(r @ r)


def grad_h(p: ProjectionProblem, tau) -> np.ndarray:
    """Gradient ``-2 (A + 2 B_tau)^T r`` of :func:`loss_h`."""
    tau = np.asarray(tau, dtype=float)
    r = _residual(p, tau)
    return -2.0 * (p.A + 2.0 * (p.B @ tau)).T @ r


def surrogate_g(p: ProjectionProblem, tau, eta) -> float:
    tau = np.asarray(tau, dtype=float)
    eta = np.asarray(eta, dtype=float)
    base = p.x - p.c
    btn = (p.B @ eta) @ tau
    r1 = base - p.A @ tau - btn
    r2 = base - p.A @ eta - btn
    return 0.5 * float(r1 @ r1) + 0.5 * float(r2 @ r2)


def gamma(p: ProjectionProblem, eta) -> np.ndarray:
    """``Gamma_eta = (A + B_eta)^T (A + B_eta) + B_eta^T B_eta``."""
    Be = p.B @ np.asarray(eta, dtype=float)
    M = p.A + Be
    return M.T @ M + Be.T @ Be


def zeta(p: ProjectionProblem, eta) -> np.ndarray:
    """``zeta_eta = (A + B_eta)^T (x - c) + B_eta^T (x - c - A eta)``."""
    eta = np.asarray(eta, dtype=float)
    Be = p.B @ eta
    base = p.x - p.c
    return (p.A + Be).T @ base + Be.T @ (base - p.A @ eta)


def hessian_g(p: ProjectionProblem, tau, eta) -> np.ndarray:
    """Hessian of :func:`surrogate_g` with respect to ``(tau, eta)``.

    The upper-right block is ``d^2 g / d tau d eta``; the lower-left block is
    its transpose.
    """
    tau = np.asarray(tau, dtype=float)
    eta = np.asarray(eta, dtype=float)
    Bt = p.B @ tau
    Be = p.B @ eta
    inner = p.x - p.c - p.A @ (tau + eta) / 2.0 - Be @ tau
    cross = (-2.0 * tensor_adjoint(p.B, inner)
             + Be.T @ (p.A + Bt) + (p.A + Be).T @ Bt)
    return np.block([[gamma(p, eta), cross], [cross.T, gamma(p, tau)]])


def certificate(p: ProjectionProblem, alpha: float) -> ConvexityCertificate:
    """Check the sufficient condition for strong convexity of ``g`` on a ball.

    The condition is
    ``(2 ||x-c||_1 + 4 alpha ||A||_{2,1}) b + 3 D alpha^2 b^2 <= sigma_d(A)^2 / 4``
    with ``b = max_k sigma_1(B_k)``.  It is equivalent to ``b <= b0`` where
    ``b0`` is the positive root of the quadratic in ``b``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    D, d = p.A.shape
    b = float(np.max(np.linalg.norm(p.B, ord=2, axis=(1, 2)))) if D else 0.0
    sv = np.linalg.svd(p.A, compute_uv=False)
    sd = float(sv[d - 1]) if sv.size >= d else 0.0
    l1 = float(np.abs(p.x - p.c).sum())
    a21 = float(np.linalg.norm(p.A, axis=1).sum())
    lin = l1 + 2.0 * alpha * a21
    quad = 3.0 * D * alpha ** 2
    b0 = (-lin + np.sqrt(lin ** 2 + quad * sd ** 2 / 4.0)) / quad
    lhs = 2.0 * lin * b + quad * b ** 2
    satisfied = bool(lhs <= sd ** 2 / 4.0)
    return ConvexityCertificate(b=b, b0=float(b0), alpha=float(alpha),
                                sigma_d_A=sd, satisfied=satisfied)


# ---------------------------------------------------------------------------
# batched kernel


def _batch_solve(G: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Solve the stack of SPD systems ``G[i] t = z[i]``."""
    d = G.shape[-1]
    if d == 1:
        g = G[:, 0, 0]
        scale = np.abs(g).max() if g.size else 0.0
        if np.any(g <= RCOND_MIN * max(scale, np.finfo(float).tiny)):
            raise SingularGammaError("Gamma is singular")
        return z / g[:, None]
    if d == 2:
        # closed form; eigenvalues only for the conditioning check
        a, b, c = G[:, 0, 0], G[:, 0, 1], G[:, 1, 1]
        mid, rad = 0.5 * (a + c), np.hypot(0.5 * (a - c), b)
        if np.any(mid - rad <= RCOND_MIN * np.maximum(mid + rad, np.finfo(float).tiny)):
            raise SingularGammaError("Gamma is singular")
        det = a * c - b * b
        return np.column_stack((c * z[:, 0] - b * z[:, 1], a * z[:, 1] - b * z[:, 0])) / det[:, None]
    w, V = np.linalg.eigh(G)
    if np.any(w[:, 0] <= RCOND_MIN * np.maximum(w[:, -1], np.finfo(float).tiny)):
        raise SingularGammaError("Gamma is singular")
    y = np.einsum("iab,ia->ib", V, z) / w
    return np.einsum("iab,ib->ia", V, y)


def _gamma_zeta_batch(base, A, B, eta):
    # base: (n, D), eta: (n, d) -> Gamma (n, d, d), zeta (n, d)
    Be = np.einsum("kab,ib->ika", B, eta)
    M = A[None] + Be
    G = np.einsum("ika,ikb->iab", M, M) + np.einsum("ika,ikb->iab", Be, Be)
    z = (np.einsum("ika,ik->ia", M, base)
         + np.einsum("ika,ik->ia", Be, base - eta @ A.T))
    return G, z


def _loss_batch(base, A, Q, tau):
    r = base - tau @ A.T - build_psi(tau.T).T @ Q.T
    return np.einsum("ik,ik->i", r, r)


def _grad_batch(base, A, B, Q, tau):
    r = base - tau @ A.T - build_psi(tau.T).T @ Q.T
    Bt = np.einsum("kab,ib->ika", B, tau)
    return -2.0 * np.einsum("ika,ik->ia", A[None] + 2.0 * Bt, r)


@dataclass(frozen=True)
class BatchProjection:
    """Column-wise projections of many targets onto one surface.

    Arrays are laid out like the data: ``tau`` and ``eta`` have shape
    ``(d, m)``; the per-target fields have shape ``(m,)``.
    """

    tau: np.ndarray
    eta: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    loss: np.ndarray
    grad_norm: np.ndarray
    max_norm: np.ndarray


def project_batch(model: QuadModel, X, init=None, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> BatchProjection:
    """Project every column of ``X`` onto the surface of ``model``.

    Parameters
    ----------
    model : QuadModel
    X : array_like, shape (D, m)
    init : array_like, shape (d, m), optional
        Warm starts; zeros when omitted.
    tol, max_iter
        A target stops once ``max(||tau_s - tau_{s-1}||, ||tau_s - eta_s||) <= tol``.

    Returns
    -------
    BatchProjection
        Converged targets report their final iterate.  The others report the
        lowest-loss point seen, the warm start included.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    D, d = model.A.shape
    if X.shape[0] != D:
        raise DimensionError(f"X must have {D} rows")
    m = X.shape[1]
    A, Q = model.A, model.Q
    B = q_to_tensor(Q, d)
    base = (X - model.c[:, None]).T
    if init is None:
        start = np.zeros((m, d))
    else:
        start = np.array(init, dtype=float).reshape(d, m).T

    tau = start.copy()
    eta = start.copy()
    best = start.copy()
    best_loss = _loss_batch(base, A, Q, start)
    max_norm = np.linalg.norm(start, axis=1)
    iters = np.zeros(m, dtype=int)
    stepped = np.zeros(m, dtype=bool)
    active = np.arange(m)

    for _ in range(max_iter):
        if active.size == 0:
            break
        b = base[active]
        G, z = _gamma_zeta_batch(b, A, B, eta[active])
        t_new = _batch_solve(G, z)
        G, z = _gamma_zeta_batch(b, A, B, t_new)
        e_new = _batch_solve(G, z)

        step = np.maximum(np.linalg.norm(t_new - tau[active], axis=1),
                          np.linalg.norm(t_new - e_new, axis=1))
        tau[active] = t_new
        eta[active] = e_new
        iters[active] += 1
        max_norm[active] = np.maximum(
            max_norm[active],
            np.maximum(np.linalg.norm(t_new, axis=1), np.linalg.norm(e_new, axis=1)))
        for cand in (t_new, e_new):
            lc = _loss_batch(b, A, Q, cand)
            better = lc < best_loss[active]
            idx = active[better]
            best[idx] = cand[better]
            best_loss[idx] = lc[better]
        done = step <= tol
        stepped[active[done]] = True
        active = active[~done]

    out = np.where(stepped[:, None], tau, best)
    grad = np.linalg.norm(_grad_batch(base, A, B, Q, out), axis=1)
    conv = stepped & (grad <= 10.0 * tol)
    return BatchProjection(
        tau=out.T.copy(), eta=eta.T.copy(), iterations=iters, converged=conv,
        loss=_loss_batch(base, A, Q, out), grad_norm=grad, max_norm=max_norm)


def project(p: ProjectionProblem, init=None, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> ProjectionResult:
    """Nearest point on the quadratic surface of ``p`` to ``p.x``.

    Alternates ``tau_s = Gamma_{eta_{s-1}}^{-1} zeta_{eta_{s-1}}`` and
    ``eta_s = Gamma_{tau_s}^{-1} zeta_{tau_s}`` from ``tau_0 = eta_0 = init``
    (zero by default).  Non-convergence is reported through ``converged``;
    only a singular ``Gamma`` raises.
    """
    model = QuadModel(p.c, p.A, tensor_to_q(p.B))
    init_col = None if init is None else np.asarray(init, dtype=float).reshape(p.d, 1)
    res = project_batch(model, p.x[:, None], init=init_col, tol=tol, max_iter=max_iter)
    return ProjectionResult(
        tau=res.tau[:, 0], eta=res.eta[:, 0], iterations=int(res.iterations[0]),
        converged=bool(res.converged[0]), loss=float(res.loss[0]),
        grad_norm=float(res.grad_norm[0]), max_norm=float(res.max_norm[0]))
