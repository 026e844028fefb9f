"""Multiplier-bootstrap calibration of likelihood-ratio confidence sets."""

from .bootstrap import (
    BootstrapSample,
    WeightLaw,
    bootstrap_quantile,
    draw_bootstrap_sample,
    sample_weights,
    smooth_indicator,
    smoothed_bootstrap_quantile,
)
from .diagnostics import (
    BiasDiagnostics,
    normalized_score,
    plug_in_matrices,
    population_matrices,
    smb_bound_glm,
    smb_bound_quantile,
    wilks_residual,
)
from .experiments import ExperimentConfig, run_bias_sweep, run_coverage, run_ecdf_pair
from .generators import TrueModelSpec
from .models import GLM_LINKS, BernoulliGLM, CanonicalGLM, Dataset, GaussianLinear, Model, Quantile, hessian, log_lik, score
from .optimizer import FitResult, bootstrap_lr_statistic, fit_mle, fit_weighted_mle, lr_statistic

__version__ = "0.1.0"
