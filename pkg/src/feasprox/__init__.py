"""Feasibility-constrained proximal corrections for annealed denoiser priors."""

from .core import (CorrectionConfig, NoiseModel, Rng, Schedule, gamma_at,
                   make_edm_schedule)
from .correction import (CorrectionResult, StepModel, admm_correct, alpha_fd, alpha_star,
                         backtrack, grad_f, objective, project_ball, qdp_correct)
from .diagnostics import (KktReport, KlBoundInput, golden_section_linesearch, kkt_residual,
                          kl_gaussian_injected, mse, oracle_anneal, oracle_constrained_prox,
                          psnr)
from .operators import (CountingOperator, ForwardOperator, OperatorSpec, as_matrix,
                        build_operator, gaussian_kernel)
from .priors import (GaussianPrior, GmmPrior, LinearAutoencoder, latent_prior,
                     squared_exponential_cov)
from .sampler import (HybridConfig, RunRecord, compose_decoder, reanneal, run_latent_hybrid,
                      run_pixel)
from .tensorio import read_tensor, write_tensor

__version__ = "0.1.0"
