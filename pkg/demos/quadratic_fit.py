"""Fit QMF and LMF to one 40-point chart of a noisy circle and compare residuals."""
import numpy as np

from qmf import GenSpec, SolverConfig, fit_lmf, fit_qmf, generate

X = generate(GenSpec("unit-circle", 240, 0.05, 2)).points
near = np.argsort(np.linalg.norm(X - X[:, :1], axis=0), kind="stable")[:40]
chart = X[:, near] - X[:, near].mean(axis=1, keepdims=True)
q = fit_qmf(chart, 1, SolverConfig(max_outer=200))
lin = fit_lmf(chart, 1)
print(f"QMF loss {q.loss_trace[-1]:.5f} after {q.iterations} iterations (converged={q.converged})")
print(f"LMF loss {lin.loss_trace[-1]:.5f}")
print("c =", q.model.c.round(4), " A =", q.model.A.ravel().round(4),
      " Q =", q.model.Q.ravel().round(4))
