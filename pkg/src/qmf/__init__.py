"""Quadratic matrix factorization and local quadratic manifold denoising."""

from .core import (FitResult, RankCollapseError, RankDeficiencyError, SolverConfig, fit_lmf,
                   fit_qmf, init_embedding, loss, orthonormalize, solve_R, subspace_gap)
from .datasets import (EvalReport, GenSpec, ManifoldDescriptor, benchmark_sweep, evaluate,
                       generate)
from .denoise import (DenoiseConfig, PointCloud, build_chart, denoise_all, denoise_point,
                      lmf_denoise, local_pca_denoise, pca_reduce)
from .features import QuadModel, build_T, n_features, psi, q_to_tensor, tensor_to_q, xi
from .projection import (ConvexityCertificate, ProjectionProblem, ProjectionResult,
                         certificate, grad_h, hessian_g, loss_h, project, project_batch)
from .rqmf import (RegConfig, RidgePath, fit_rqmf, s_double_prime, s_lambda, s_prime,
                   solve_R_ridge, tune_lambda, tuning_curve)

__version__ = "0.1.0"
