"""Seeded synthetic manifolds, nearest-point projectors and error metrics."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .core import SolverConfig
from .denoise import (DenoiseConfig, PointCloud, denoise_all, lmf_denoise,
                      local_pca_denoise, sphere_delta)

logger = logging.getLogger(__name__)

SHAPES = ("unit-circle", "unit-sphere", "sine-curve", "swiss-roll")
SINE_RANGE = (np.pi / 3, 2 * np.pi / 3)
SWISS_RANGE = (1.5 * np.pi, 4.5 * np.pi)


class UnknownShapeError(ValueError):
    pass


@dataclass(frozen=True)
class GenSpec:
    shape: str
    n: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise UnknownShapeError(f"unknown shape {self.shape!r}; choose from {SHAPES}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "GenSpec":
        return cls(**json.loads(text))


def _swiss(t):
    return np.vstack((t * np.cos(t), t * np.sin(t))) / SWISS_RANGE[1]


def _sine(t):
    return np.vstack((t, np.sin(t)))


_CURVES = {"sine-curve": (_sine, SINE_RANGE), "swiss-roll": (_swiss, SWISS_RANGE)}


@dataclass
class ManifoldDescriptor:
    """Ground-truth manifold with a nearest-point projector.

    ``kind`` is one of ``unit-sphere``, ``unit-circle``, ``sine-curve``,
    ``swiss-roll`` or ``sample-set``; the last keeps the clean samples in
    ``params["points"]`` and projects to the nearest of them.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.kind in ("unit-sphere", "unit-circle"):
            r = np.linalg.norm(X, axis=0)
            if np.any(r == 0):
                raise ValueError("projection onto the sphere is undefined at the origin")
            return X / r
        if self.kind in _CURVES:
            curve, (lo, hi) = _CURVES[self.kind]
            return curve(curve_parameter(self.kind, X))
        if self.kind == "sample-set":
            S = np.asarray(self.params["points"], dtype=float)
            d2 = (np.sum(X * X, axis=0)[:, None] - 2.0 * X.T @ S
                  + np.sum(S * S, axis=0)[None, :])
            return S[:, np.argmin(d2, axis=1)]
        raise UnknownShapeError(f"unknown manifold kind {self.kind!r}")

    def to_dict(self) -> dict:
        params = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                  for k, v in self.params.items()}
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_dict(cls, data: dict) -> "ManifoldDescriptor":
        return cls(data["kind"], dict(data.get("params", {})))


def curve_parameter(kind: str, X, grid_size: int = 4001) -> np.ndarray:
    """Curve parameter of the nearest curve point to each column of ``X``.

    A dense grid locates the basin, then a bounded scalar search refines it.
    """
    curve, (lo, hi) = _CURVES[kind]
    X = np.asarray(X, dtype=float)
    grid = np.linspace(lo, hi, grid_size)
    C = curve(grid)
    step = grid[1] - grid[0]
    out = np.empty(X.shape[1])
    for i in range(X.shape[1]):
        x = X[:, i]
        j = int(np.argmin(np.sum((C - x[:, None]) ** 2, axis=0)))
        a, b = max(lo, grid[j] - step), min(hi, grid[j] + step)

        def dist2(t, x=x):
            return float(np.sum((curve(np.array([t]))[:, 0] - x) ** 2))

        res = optimize.minimize_scalar(dist2, bounds=(a, b), method="bounded",
                                       options={"xatol": 1e-12})
        cands = [(dist2(t), t) for t in (a, b, res.x)]
        out[i] = min(cands)[1]
    return out


def point_stream(seed: int, index: int) -> np.random.Generator:
    """PCG64 stream of point ``index``: child ``index`` of ``SeedSequence(seed)``.

    Every point draws from its own stream, so any subset of points can be
    regenerated, in any order or in parallel, with identical values.
    """
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(seed, spawn_key=(index,))))


def _sample_point(shape: str, rng: np.random.Generator, t_grid: Optional[float]):
    if shape == "unit-sphere":
        g = rng.standard_normal(3)
        return g / np.linalg.norm(g)
    if shape == "unit-circle":
        theta = rng.uniform(0.0, 2.0 * np.pi)
        return np.array([np.cos(theta), np.sin(theta)])
    if shape == "sine-curve":
        return _sine(np.array([t_grid]))[:, 0]
    return _swiss(np.array([rng.uniform(*SWISS_RANGE)]))[:, 0]


def generate(spec: GenSpec) -> PointCloud:
    """Sample ``spec.n`` points of a named manifold plus isotropic Gaussian noise.

    Point ``i`` uses :func:`point_stream` ``(spec.seed, i)``: first the clean
    sample, then the ambient noise.  Sine-curve parameters are evenly spaced.
    """
    n = spec.n
    t_grid = np.linspace(*SINE_RANGE, n) if spec.shape == "sine-curve" else [None] * n
    cols = []
    for i in range(n):
        rng = point_stream(spec.seed, i)
        x = _sample_point(spec.shape, rng, t_grid[i])
        cols.append(x + spec.noise_sigma * rng.standard_normal(x.size))
    truth = ManifoldDescriptor(spec.shape, {"spec": asdict(spec)})
    return PointCloud(np.column_stack(cols), truth)


@dataclass
class EvalReport:
    mse: float
    sd: float
    per_point_sq_err: np.ndarray


def evaluate(denoised, truth: ManifoldDescriptor) -> EvalReport:
    """Mean and population SD of squared distances to the true manifold."""
    X = denoised.points if isinstance(denoised, PointCloud) else np.asarray(denoised, dtype=float)
    err = np.sum((X - truth.project(X)) ** 2, axis=0)
    mse = float(err.mean())
    sd = float(np.sqrt(np.mean((err - mse) ** 2)))
    return EvalReport(mse, sd, err)


# ---------------------------------------------------------------------------
# benchmark sweep

METHODS = ("rqmf-e", "rqmf-k", "local-pca", "lmf")

# one outer step per chart: keeps a 10-seed sphere table within minutes on a
# single core, and extra steps did not lower the sphere MSE
BENCH_SOLVER = SolverConfig(eps=1e-4, max_outer=1)


def _default_delta(method: str, K: int) -> float:
    return sphere_delta(K) if method == "rqmf-e" else 100.0


def denoise_method(cloud: PointCloud, method: str, K: int, d: int,
                   delta: Optional[float] = None, solver: Optional[SolverConfig] = None,
                   threads: Optional[int] = 1) -> np.ndarray:
    """Denoised copy of ``cloud.points`` by one of :data:`METHODS`."""
    X = cloud.points
    if method == "local-pca":
        return np.column_stack([local_pca_denoise(cloud, X[:, i], K, d)
                                for i in range(X.shape[1])])
    if method == "lmf":
        return np.column_stack([lmf_denoise(cloud, X[:, i], K, d)
                                for i in range(X.shape[1])])
    if method not in ("rqmf-e", "rqmf-k"):
        raise ValueError(f"unknown method {method!r}")
    kw = {} if solver is None else {"solver": solver}
    cfg = DenoiseConfig(d=d, k=K, weighting="equal" if method == "rqmf-e" else "gaussian",
                        bandwidth="sphere-paper",
                        delta=_default_delta(method, K) if delta is None else delta, **kw)
    return denoise_all(cloud, cfg, threads=threads).points


@dataclass
class BenchRow:
    method: str
    K: int
    mse: float
    sd: float


def benchmark_sweep(spec: GenSpec, methods: Sequence[str], Ks: Sequence[int],
                    delta_rule: Optional[Callable[[str, int], float]] = None,
                    repeats: int = 10, seed: int = 0, d: int = 2,
                    solver: Optional[SolverConfig] = None,
                    threads: Optional[int] = 1) -> list[BenchRow]:
    """Mean MSE and SD per ``(method, K)`` over ``repeats`` seeded clouds.

    Cloud ``r`` uses seed ``seed + r``; all methods see the same clouds.  A
    failed cell is reported as NaN.  ``solver`` defaults to :data:`BENCH_SOLVER`.
    """
    solver = BENCH_SOLVER if solver is None else solver
    for mth in methods:
        if mth not in METHODS:
            raise ValueError(f"unknown method {mth!r}; choose from {METHODS}")
    clouds = [generate(GenSpec(spec.shape, spec.n, spec.noise_sigma, seed + r))
              for r in range(repeats)]
    rows = []
    for mth in methods:
        for K in Ks:
            mses, sds = [], []
            for cloud in clouds:
                try:
                    delta = None if delta_rule is None else delta_rule(mth, K)
                    out = denoise_method(cloud, mth, K, d, delta=delta, solver=solver,
                                         threads=threads)
                    rep = evaluate(out, cloud.truth)
                    mses.append(rep.mse)
                    sds.append(rep.sd)
                except Exception:  # noqa: BLE001 - a failed cell must not abort the sweep
                    logger.exception("benchmark cell %s K=%d failed", mth, K)
                    mses.append(np.nan)
                    sds.append(np.nan)
            rows.append(BenchRow(mth, int(K), float(np.mean(mses)), float(np.mean(sds))))
    return rows


def rows_to_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "K", "mse", "sd"])
    for r in rows:
        writer.writerow([r.method, r.K, format(r.mse, ".17g"), format(r.sd, ".17g")])
    return buf.getvalue()
