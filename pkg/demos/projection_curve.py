"""Alternating projection on a 1-D quadratic curve in R^3.

Prints the projected latent value, compares it with a brute-force scan, then
scales the curvature by 30 to show the iteration losing its certificate.
"""
import numpy as np

from qmf import ProjectionProblem, certificate, project

A = np.array([-0.8979, 1.0086, -0.5422])
B = np.array([0.7817, -1.4908, -0.3679])
c = np.array([0.4171, 0.9176, 0.1759])
x = np.array([0.2561, 0.7500, 0.0099])


def scan(B):
    t = np.linspace(-3, 3, 600_001)
    r = (x - c)[:, None] - np.outer(A, t) - np.outer(B, t * t)
    return t[np.argmin(np.sum(r * r, axis=0))]


for scale in (1.0, 30.0):
    p = ProjectionProblem(x, c, A, scale * B)
    res = project(p)
    cert = certificate(p, alpha=max(res.max_norm, 1e-12))
    print(f"B x {scale:g}: tau={res.tau[0]:+.6f} scan={scan(scale * B):+.6f} "
          f"converged={res.converged} iterations={res.iterations} "
          f"certificate b={cert.b:.3g} b0={cert.b0:.3g} ok={cert.satisfied}")
