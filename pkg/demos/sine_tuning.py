"""Tuning curve s(lam), s'(lam), s''(lam) on a sine-curve chart, and the
penalty picked for a few sensitivity levels."""
import numpy as np

from qmf import GenSpec, RidgePath, generate, init_embedding, tune_lambda, tuning_curve

cloud = generate(GenSpec("sine-curve", 80, 0.05, 1))
X = cloud.points - cloud.points.mean(axis=1, keepdims=True)
w = np.ones(X.shape[1])
Phi = init_embedding(X, 1)
curve = tuning_curve(X, Phi, w, np.linspace(1e-3, 0.1, 12))
print(curve.to_csv(), end="")
for delta in (0.05, 0.2, 1.0):
    lam, status = RidgePath(X, Phi, w).solve(delta)
    print(f"delta={delta}: lambda*={lam:.6g} ({status})")
print("tune_lambda(0.2) =", tune_lambda(X, Phi, w, 0.2))
