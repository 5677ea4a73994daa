"""Command-line interface: ``qmf generate | denoise | tune | bench``.

Files
-----
cloud CSV     one point per row, comma separated, optional header line,
              reals with 17 significant digits
truth JSON    ``<stem>.truth.json`` next to a generated cloud; describes the
              clean manifold and enables MSE/SD reporting in ``denoise``
report JSON   list of ``{index, status, lambda_used, iterations, warning}``
tuning CSV    ``lambda,s,s_prime,s_double_prime``
bench CSV     ``method,K,mse,sd``

Every subcommand accepts ``--config FILE.json`` whose keys are the long flag
names (dashes or underscores); explicit flags override the file and unknown
keys are rejected.  Exit status: 0 success, 1 runtime or I/O failure, 2 usage.
The worker count comes from ``--threads``, then ``QMF_THREADS``, then the CPU
count; results do not depend on it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as qio
from .core import SolverConfig, init_embedding
from .datasets import METHODS, SHAPES, GenSpec, benchmark_sweep, evaluate, generate, rows_to_csv
from .denoise import DenoiseConfig, build_chart, denoise_all, resolve_threads
from .rqmf import LAMBDA_FLOOR, RidgePath, tuning_curve

logger = logging.getLogger("qmf")

SHAPE_ALIASES = {"sphere": "unit-sphere", "circle": "unit-circle",
                 "sine": "sine-curve", "swiss": "swiss-roll"}

# defaults live here rather than in argparse so that a config file can fill gaps
DEFAULTS = {
    "generate": {"sigma": 0.0, "seed": 0, "header": False},
    "denoise": {"mode": "e", "bandwidth": "sphere-paper", "eps": 1e-4, "max_outer": 30,
                "seed": 0},
    "tune": {"mode": "e", "bandwidth": "sphere-paper", "target": 0, "grid_min": 1e-3,
             "grid_max": 0.1, "grid_n": 50},
    "bench": {"shape": "unit-sphere", "n": 240, "sigma": 0.2, "methods": "rqmf-e,local-pca",
              "k": "7,10,13,16,19,22,25,28", "repeats": 10, "seed": 0, "d": 2,
              "eps": 1e-4, "max_outer": 1},
}


class UsageError(Exception):
    """Invalid flags or configuration; maps to exit status 2."""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmf", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file of flag values (flags win)")
        sp.add_argument("--threads", type=int, help="worker processes (default: QMF_THREADS or CPU count)")

    g = sub.add_parser("generate", help="sample a noisy synthetic manifold")
    common(g)
    g.add_argument("--shape", help=f"one of {', '.join(SHAPES)} (or sphere, circle, sine, swiss)")
    g.add_argument("--n", type=int, help="number of points")
    g.add_argument("--sigma", type=float, help="noise standard deviation (default 0)")
    g.add_argument("--seed", type=int, help="RNG seed (default 0)")
    g.add_argument("--out", help="output CSV; the truth sidecar goes next to it")
    g.add_argument("--header", action="store_const", const=True, help="write a header row")

    def chart_flags(sp):
        sp.add_argument("--input", help="input cloud CSV")
        sp.add_argument("--d", type=int, help="intrinsic dimension")
        sp.add_argument("--k", type=int, help="chart size (nearest neighbors)")
        sp.add_argument("--radius", type=float, help="chart radius (instead of --k)")
        sp.add_argument("--mode", choices=("e", "k"), help="e: equal weights, k: Gaussian kernel")
        sp.add_argument("--bandwidth", help="sphere-paper, knn-dist or a positive number")
        sp.add_argument("--delta", help="sensitivity level or the preset sphere-paper")

    dn = sub.add_parser("denoise", help="denoise every point of a cloud")
    common(dn)
    chart_flags(dn)
    dn.add_argument("--lam", type=float, help="fixed penalty (instead of --delta)")
    dn.add_argument("--eps", type=float, help="outer stopping tolerance (default 1e-4)")
    dn.add_argument("--max-outer", type=int, help="outer iteration cap (default 30)")
    dn.add_argument("--seed", type=int, help="recorded for reproducibility (default 0)")
    dn.add_argument("--out", help="denoised CSV")
    dn.add_argument("--report", help="per-point JSON report (default <out stem>.report.json)")

    t = sub.add_parser("tune", help="export s, s', s'' over a lambda grid for one chart")
    common(t)
    chart_flags(t)
    t.add_argument("--target", type=int, help="index of the chart's target point (default 0)")
    t.add_argument("--grid-min", type=float, help="smallest lambda (default 1e-3)")
    t.add_argument("--grid-max", type=float, help="largest lambda (default 0.1)")
    t.add_argument("--grid-n", type=int, help="grid size (default 50)")
    t.add_argument("--out", help="tuning curve CSV")

    b = sub.add_parser("bench", help="MSE/SD table over methods and chart sizes")
    common(b)
    b.add_argument("--shape", help="manifold (default unit-sphere)")
    b.add_argument("--n", type=int, help="points per cloud (default 240)")
    b.add_argument("--sigma", type=float, help="noise level (default 0.2)")
    b.add_argument("--methods", help=f"comma list from {', '.join(METHODS)}")
    b.add_argument("--k", help="comma list of chart sizes")
    b.add_argument("--repeats", type=int, help="clouds per cell (default 10)")
    b.add_argument("--seed", type=int, help="seed of the first cloud (default 0)")
    b.add_argument("--d", type=int, help="intrinsic dimension (default 2)")
    b.add_argument("--delta", help="fixed delta for every cell (default: per-method preset)")
    b.add_argument("--eps", type=float, help="outer stopping tolerance (default 1e-4)")
    b.add_argument("--max-outer", type=int, help="outer iteration cap per chart (default 1)")
    b.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(subparsers={"generate": g, "denoise": dn, "tune": t, "bench": b})
    return p


def _merge(args: argparse.Namespace) -> dict:
    skip = ("command", "verbose", "config", "subparsers")
    opts = {k: v for k, v in vars(args).items() if k not in skip}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        for key, value in data.items():
            name = key.replace("-", "_")
            if name not in opts:
                raise UsageError(f"unknown config key {key!r}")
            if opts[name] is None:
                opts[name] = value
    for key, value in DEFAULTS[args.command].items():
        if opts.get(key) is None:
            opts[key] = value
    return opts


@contextmanager
def _validating():
    """Constructor errors inside this block are usage errors (exit 2)."""
    try:
        yield
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _require(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): "
                         + ", ".join("--" + n.replace("_", "-") for n in missing))


def _shape(name: str) -> str:
    return SHAPE_ALIASES.get(name, name)


def _number_or_preset(value, what: str):
    if value is None or isinstance(value, (int, float)):
        return value
    if value == "sphere-paper":
        return value
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"{what} must be a number or 'sphere-paper'") from None


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad integer list {text!r}") from None


def _out_dir_ok(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")


def _denoise_config(opts: dict) -> DenoiseConfig:
    if opts.get("lam") is not None and opts.get("delta") is not None:
        raise UsageError("give only one of --lam and --delta")
    delta = _number_or_preset(opts.get("delta"), "--delta")
    if opts.get("lam") is None and delta is None:
        raise UsageError("one of --lam and --delta is required")
    bandwidth = _number_or_preset(opts["bandwidth"], "--bandwidth") \
        if opts["bandwidth"] != "knn-dist" else "knn-dist"
    solver = SolverConfig(eps=opts.get("eps", 1e-4), max_outer=opts.get("max_outer", 30))
    return DenoiseConfig(d=opts["d"], k=opts["k"], radius=opts["radius"],
                         weighting="equal" if opts["mode"] == "e" else "gaussian",
                         bandwidth=bandwidth, lam=opts.get("lam"), delta=delta,
                         solver=solver, seed=opts.get("seed", 0))


def cmd_generate(opts: dict) -> int:
    _require(opts, "shape", "n", "out")
    with _validating():
        spec = GenSpec(_shape(opts["shape"]), opts["n"], opts["sigma"], opts["seed"])
    _out_dir_ok(opts["out"])
    cloud = generate(spec)
    qio.write_cloud(opts["out"], cloud, header=bool(opts["header"]))
    qio.write_truth(qio.sidecar_path(opts["out"]), cloud.truth)
    return 0


def cmd_denoise(opts: dict) -> int:
    _require(opts, "input", "d", "out")
    with _validating():
        cfg = _denoise_config(opts)
        threads = resolve_threads(opts["threads"])
    report_path = opts["report"] or str(Path(opts["out"]).with_suffix("")) + ".report.json"
    _out_dir_ok(opts["out"])
    _out_dir_ok(report_path)
    cloud = qio.read_cloud(opts["input"])
    result = denoise_all(cloud, cfg, threads=threads)
    qio.write_cloud(opts["out"], result.cloud)
    qio.write_report(report_path, result.report)
    fallbacks = sum(r.status != "ok" for r in result.report)
    if fallbacks:
        logger.warning("%d point(s) fell back to local PCA", fallbacks)
    if cloud.truth is not None:
        rep = evaluate(result.cloud, cloud.truth)
        print(f"mse {rep.mse:.17g}")
        print(f"sd {rep.sd:.17g}")
    return 0


def cmd_tune(opts: dict) -> int:
    _require(opts, "input", "d", "delta", "out")
    delta = _number_or_preset(opts["delta"], "--delta")
    with _validating():
        cfg = _denoise_config({**opts, "lam": None, "delta": delta})
    if not (0 <= opts["grid_min"] <= opts["grid_max"]) or opts["grid_n"] < 2:
        raise UsageError("need 0 <= grid-min <= grid-max and grid-n >= 2")
    _out_dir_ok(opts["out"])
    cloud = qio.read_cloud(opts["input"], with_truth=False)
    if not 0 <= opts["target"] < cloud.m:
        raise UsageError(f"--target must lie in [0, {cloud.m - 1}]")
    chart = build_chart(cloud, cloud.points[:, opts["target"]], cfg)
    members = cloud.points[:, chart.member_indices]
    Xc = members - members.mean(axis=1, keepdims=True)
    Phi = init_embedding(Xc, cfg.d)
    grid = np.linspace(opts["grid_min"], opts["grid_max"], opts["grid_n"])
    grid = np.maximum(grid, LAMBDA_FLOOR)
    curve = tuning_curve(Xc, Phi, chart.weights, grid)
    lam, status = RidgePath(Xc, Phi, chart.weights).solve(cfg.resolve_delta(members.shape[1]))
    if status != "ok":
        logger.warning("lambda* hit the %s (%g)", status, lam)
    qio.write_text(opts["out"], curve.to_csv())
    print(f"lambda_star {lam:.17g}")
    print(f"status {status}")
    return 0


def cmd_bench(opts: dict) -> int:
    methods = [m.strip() for m in str(opts["methods"]).split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {METHODS}")
    Ks = _int_list(opts["k"])
    if not Ks:
        raise UsageError("--k needs at least one value")
    delta = _number_or_preset(opts.get("delta"), "--delta")
    rule = None if delta is None or delta == "sphere-paper" else (lambda m, K: float(delta))
    with _validating():
        spec = GenSpec(_shape(opts["shape"]), opts["n"], opts["sigma"], opts["seed"])
        solver = SolverConfig(eps=opts["eps"], max_outer=opts["max_outer"])
        threads = resolve_threads(opts["threads"])
        if opts["repeats"] < 1 or any(K < 1 for K in Ks):
            raise ValueError("repeats and every K must be >= 1")
    if opts["out"]:
        _out_dir_ok(opts["out"])
    rows = benchmark_sweep(spec, methods, Ks, delta_rule=rule, repeats=opts["repeats"],
                           seed=opts["seed"], d=opts["d"], solver=solver, threads=threads)
    text = rows_to_csv(rows)
    if opts["out"]:
        qio.write_text(opts["out"], text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"generate": cmd_generate, "denoise": cmd_denoise, "tune": cmd_tune,
            "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _merge(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        args.subparsers[args.command].print_usage(sys.stderr)
        print(f"qmf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"qmf {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
