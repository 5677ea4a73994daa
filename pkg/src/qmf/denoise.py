"""Per-point manifold denoising with local regularized quadratic fits.

Every target ``y`` gets its own chart (``K`` nearest samples or a radius ball),
a regularized quadratic surface is fitted to the chart, and ``y`` is replaced
by its projection onto that surface.  Local PCA is the linear baseline and the
fallback when a chart cannot support the quadratic fit.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core import SolverConfig, fit_lmf
from .features import n_features
from .projection import project_batch
from .rqmf import RegConfig, RidgePath, fit_rqmf

logger = logging.getLogger(__name__)

BANDWIDTH_RULES = ("sphere-paper", "knn-dist")


class EmptyChartError(ValueError):
    """No sample lies within the requested radius."""


@dataclass
class PointCloud:
    """Samples as columns of ``points`` (shape ``(D, m)``), with optional ground truth."""

    points: np.ndarray
    truth: Optional[object] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError("points must be a (D, m) array with m >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite entries")
        self.points = pts

    @property
    def D(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]


@dataclass
class Chart:
    target: np.ndarray
    member_indices: np.ndarray
    weights: np.ndarray
    bandwidth: Optional[float] = None


def sphere_delta(K: int) -> float:
    """Sensitivity level ``max(1, 8K - 125)`` used for equal weights on the sphere."""
    return float(max(1, 8 * K - 125))


@dataclass(frozen=True)
class DenoiseConfig:
    """Settings for :func:`denoise_point` and :func:`denoise_all`.

    Exactly one of ``k`` / ``radius`` picks the neighborhood and exactly one of
    ``lam`` / ``delta`` the penalty.  ``delta`` may be the preset
    ``"sphere-paper"``: ``max(1, 8K - 125)`` for equal weights and ``100`` for
    Gaussian weights.  ``bandwidth`` is a rule name or a fixed positive number.
    """

    d: int
    k: Optional[int] = None
    radius: Optional[float] = None
    weighting: str = "equal"
    bandwidth: Union[str, float] = "sphere-paper"
    lam: Optional[float] = None
    delta: Union[float, str, None] = None
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(eps=1e-4, max_outer=30))
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if (self.k is None) == (self.radius is None):
            raise ValueError("set exactly one of k and radius")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.weighting not in ("equal", "gaussian"):
            raise ValueError("weighting must be 'equal' or 'gaussian'")
        if isinstance(self.bandwidth, str):
            if self.bandwidth not in BANDWIDTH_RULES:
                raise ValueError(f"unknown bandwidth rule {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be positive")
        if (self.lam is None) == (self.delta is None):
            raise ValueError("set exactly one of lam and delta")
        if self.lam is not None and not self.lam >= 0:
            raise ValueError("lam must be non-negative")
        if isinstance(self.delta, str):
            if self.delta != "sphere-paper":
                raise ValueError(f"unknown delta preset {self.delta!r}")
        elif self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.k is not None and self.k <= n_features(self.d):
            logger.warning("K=%d does not exceed the %d quadratic features", self.k,
                           n_features(self.d))

    def resolve_delta(self, K: int) -> Optional[float]:
        if self.delta == "sphere-paper":
            return sphere_delta(K) if self.weighting == "equal" else 100.0
        return None if self.delta is None else float(self.delta)


def _neighbors(points: np.ndarray, y: np.ndarray, k=None, radius=None):
    dist = np.linalg.norm(points - y[:, None], axis=0)
    order = np.argsort(dist, kind="stable")
    if k is not None:
        if k > points.shape[1]:
            raise ValueError(f"K={k} exceeds the {points.shape[1]} samples")
        idx = order[:k]
    else:
        idx = order[dist[order] <= radius]
        if idx.size == 0:
            raise EmptyChartError(f"no sample within radius {radius}")
    return idx, dist


def build_chart(cloud: PointCloud, y, cfg: DenoiseConfig) -> Chart:
    """Neighborhood of ``y`` with weights; ties in distance go to the lower index."""
    y = np.asarray(y, dtype=float)
    idx, dist = _neighbors(cloud.points, y, cfg.k, cfg.radius)
    if cfg.weighting == "equal":
        return Chart(y, idx, np.ones(idx.size), None)
    d_far = float(dist[idx[-1]])
    if isinstance(cfg.bandwidth, str):
        h = d_far / 3.0 + 3.0 if cfg.bandwidth == "sphere-paper" else d_far
    else:
        h = float(cfg.bandwidth)
    if not h > 0:
        raise ValueError("bandwidth rule gave a non-positive bandwidth")
    w = np.exp(-dist[idx] ** 2 / (2.0 * h * h))
    return Chart(y, idx, w, h)


@dataclass
class PointReport:
    index: int
    status: str
    lambda_used: Optional[float]
    iterations: int
    warning: Optional[str]

    def to_dict(self) -> dict:
        return {"index": self.index, "status": self.status,
                "lambda_used": self.lambda_used, "iterations": self.iterations,
                "warning": self.warning}


def _local_pca(members: np.ndarray, y: np.ndarray, d: int) -> np.ndarray:
    center = members.mean(axis=1)
    Xc = members - center[:, None]
    M = Xc @ Xc.T / members.shape[1]
    w, V = np.linalg.eigh(M)
    U = V[:, ::-1][:, :d]
    return center + U @ (U.T @ (y - center))


def local_pca_denoise(cloud: PointCloud, y, K: int, d: int) -> np.ndarray:
    """``c + P (y - c)`` with ``c`` the mean of the ``K`` nearest samples and ``P``
    the projector onto their top ``d`` covariance eigenvectors."""
    y = np.asarray(y, dtype=float)
    idx, _ = _neighbors(cloud.points, y, k=K)
    return _local_pca(cloud.points[:, idx], y, d)


def lmf_denoise(cloud: PointCloud, y, K: int, d: int) -> np.ndarray:
    """Linear counterpart of :func:`denoise_point`: fit LMF to the centered chart
    of ``K`` nearest samples and return the least-squares projection of ``y``."""
    y = np.asarray(y, dtype=float)
    idx, _ = _neighbors(cloud.points, y, k=K)
    members = cloud.points[:, idx]
    center = members.mean(axis=1)
    model = fit_lmf(members - center[:, None], d).model
    tau = np.linalg.lstsq(model.A, y - center - model.c, rcond=None)[0]
    return center + model.c + model.A @ tau


def _fit_chart(members: np.ndarray, weights: np.ndarray, y: np.ndarray,
               cfg: DenoiseConfig):
    center = members.mean(axis=1)
    Xc = members - center[:, None]
    delta = cfg.resolve_delta(members.shape[1])
    reg = RegConfig(lam=cfg.lam, delta=delta, weights=weights, solver=cfg.solver)
    fit = fit_rqmf(Xc, cfg.d, reg)
    model = fit.model
    yc = y - center
    start = np.linalg.lstsq(model.A, yc - model.c, rcond=None)[0]
    proj = project_batch(model, yc[:, None], init=start[:, None],
                         tol=cfg.solver.inner_tol, max_iter=cfg.solver.inner_max_iter)
    point = center + model(proj.tau[:, 0])
    return point, fit


def _denoise_one(points: np.ndarray, index: Optional[int], y: np.ndarray,
                 cfg: DenoiseConfig):
    cloud = PointCloud(points)
    chart = build_chart(cloud, y, cfg)
    members = points[:, chart.member_indices]
    warn = []
    if members.shape[1] <= n_features(cfg.d):
        warn.append("interpolation-regime")
    try:
        point, fit = _fit_chart(members, chart.weights, y, cfg)
    except (np.linalg.LinAlgError, ValueError) as exc:
        warn.append(f"fallback to local PCA: {exc}")
        point = _local_pca(members, y, min(cfg.d, points.shape[0]))
        return point, PointReport(-1 if index is None else index, "fallback", None, 0,
                                  "; ".join(warn))
    if not fit.converged:
        warn.append("outer loop did not converge")
    lam = float(fit.lambdas[-1]) if fit.lambdas else None
    return point, PointReport(-1 if index is None else index, "ok", lam, fit.iterations,
                              "; ".join(warn) or None)


def denoise_point(cloud: PointCloud, y, cfg: DenoiseConfig) -> np.ndarray:
    """Projection of ``y`` onto the regularized quadratic fit of its chart.

    The chart is centered at its mean before fitting.  If the fit fails, the
    Local PCA point of the same chart is returned instead.
    """
    point, _ = _denoise_one(cloud.points, None, np.asarray(y, dtype=float), cfg)
    return point


@dataclass
class DenoiseResult:
    cloud: PointCloud
    report: list[PointReport]

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points


_WORKER_STATE = {}


def _worker_init(points, cfg):
    _WORKER_STATE["points"] = points
    _WORKER_STATE["cfg"] = cfg


def _worker_run(index):
    points = _WORKER_STATE["points"]
    return _denoise_one(points, index, points[:, index], _WORKER_STATE["cfg"])


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count: the argument, else ``QMF_THREADS``, else the CPU count."""
    if threads is None:
        env = os.environ.get("QMF_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def denoise_all(cloud: PointCloud, cfg: DenoiseConfig,
                threads: Optional[int] = None) -> DenoiseResult:
    """Denoise every sample independently.

    Targets are independent, so the output does not depend on ``threads``.
    Per-point failures fall back to Local PCA and are recorded in the report.
    """
    points = cloud.points
    m = points.shape[1]
    n = min(resolve_threads(threads), m)
    if n <= 1:
        results = [_denoise_one(points, i, points[:, i], cfg) for i in range(m)]
    else:
        with ProcessPoolExecutor(max_workers=n, initializer=_worker_init,
                                 initargs=(points, cfg)) as pool:
            results = list(pool.map(_worker_run, range(m), chunksize=max(1, m // (4 * n))))
    out = np.column_stack([r[0] for r in results])
    return DenoiseResult(PointCloud(out, cloud.truth), [r[1] for r in results])


def pca_reduce(cloud: PointCloud, D_target: int):
    """Project onto the top ``D_target`` eigenvectors of ``S = (1/m) sum x x^T``.

    Returns the reduced cloud (``U^T x`` per sample) and the basis ``U``.
    """
    X = cloud.points
    D, m = X.shape
    if not 1 <= D_target <= D:
        raise ValueError(f"D_target must lie in [1, {D}]")
    S = X @ X.T / m
    w, V = np.linalg.eigh(S)
    U = V[:, ::-1][:, :D_target]
    idx = np.argmax(np.abs(U), axis=0)
    U = U * np.sign(U[idx, np.arange(D_target)])
    return PointCloud(U.T @ X), U

