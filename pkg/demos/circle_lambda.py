"""Denoise a noisy unit circle with three penalty levels and report the mean
distance of the outputs to the circle.  Writes circle_<lam>.csv for plotting."""
import sys

import numpy as np

from qmf import DenoiseConfig, GenSpec, denoise_all, generate
from qmf.io import write_cloud

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cloud = generate(GenSpec("unit-circle", 240, 0.1, seed))
print(f"input    mean distance {np.mean(np.abs(np.linalg.norm(cloud.points, axis=0) - 1)):.5f}")
for lam in (0.1, 0.01, 0.0):
    out = denoise_all(cloud, DenoiseConfig(d=1, k=40, lam=lam), threads=1).cloud
    dist = np.mean(np.abs(np.linalg.norm(out.points, axis=0) - 1))
    print(f"lam={lam:<5} mean distance {dist:.5f}")
    write_cloud(f"circle_{lam}.csv", out, header=True)
