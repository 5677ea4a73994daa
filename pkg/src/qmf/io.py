"""CSV and JSON file formats.

Point clouds are stored one point per row with a comma between coordinates,
an optional non-numeric header line, and reals written with 17 significant
digits so that a write/read cycle is lossless.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datasets import ManifoldDescriptor
from .denoise import PointCloud, PointReport

FLOAT_FMT = "%.17g"


def format_rows(M: np.ndarray, header: Optional[Sequence[str]] = None) -> str:
    """Rows of ``M`` as CSV text; ``repr``-exact and locale independent."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [",".join(header)] if header is not None else []
    lines.extend(",".join(FLOAT_FMT % v for v in row) for row in M)
    return "\n".join(lines) + "\n"


def parse_rows(text: str) -> np.ndarray:
    rows = []
    for n, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        fields = line.split(",")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            if n == 0 and not rows:
                continue  # header
            raise ValueError(f"line {n + 1}: non-numeric field") from None
    if not rows:
        raise ValueError("no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("rows have differing lengths")
    return np.array(rows, dtype=float)


def sidecar_path(csv_path) -> Path:
    """``data.csv`` -> ``data.truth.json``."""
    p = Path(csv_path)
    return p.with_name(p.stem + ".truth.json")


def write_text(path, text: str) -> None:
    """Write via a temporary file and rename, so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_cloud(path, cloud: PointCloud, header: bool = False) -> None:
    names = [f"x{i}" for i in range(cloud.D)] if header else None
    write_text(path, format_rows(cloud.points.T, names))


def read_cloud(path, with_truth: bool = True) -> PointCloud:
    """Load a CSV cloud; the truth sidecar is attached when it exists."""
    X = parse_rows(Path(path).read_text(encoding="utf-8"))
    truth = None
    side = sidecar_path(path)
    if with_truth and side.exists():
        truth = read_truth(side)
    return PointCloud(X.T, truth)


def write_truth(path, truth: ManifoldDescriptor) -> None:
    write_text(path, json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n")


def read_truth(path) -> ManifoldDescriptor:
    return ManifoldDescriptor.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def report_json(report: Sequence[PointReport]) -> str:
    return json.dumps([r.to_dict() for r in report], indent=1) + "\n"


def write_report(path, report: Sequence[PointReport]) -> None:
    write_text(path, report_json(report))
