"""Gaussian-process temporal-difference value estimation: exact, sparse pseudo-input and low-rank."""

from .exact import ExactPosterior, fit_exact, predict_exact
from .hyperopt import OptimConfig, init_pseudo, objective, optimize
from .kernel import KernelParams
from .lowrank import fit_lowrank, novelty
from .sparse import (
    SparsePosterior,
    fit_sparse,
    latent_likelihood_moments,
    log_marginal,
    log_marginal_grad,
    predict_sparse,
    pseudo_posterior,
)
from .trajectory import ModelParams, Trajectory, build_h

__version__ = "0.1.0"
