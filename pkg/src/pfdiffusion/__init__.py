"""Particle-filtered guided diffusion sampling for linear inverse problems.

A population of latent particles runs a guided reverse-diffusion sampler
in parallel; bounded-likelihood weights, resampling and scheduled
pruning concentrate compute on trajectories consistent with the
measurement. Analytic Gaussian and Gaussian-mixture score models make
every mechanism checkable against closed-form posteriors at desk scale.
"""

from ._backend import backend_name
from .filtering import (
    Ensemble,
    FilterConfig,
    Particle,
    RunReport,
    degeneracy,
    effective_sample_size,
    init_ensemble,
    maybe_resample,
    normalize_weights,
    prune,
    run_particle_filter,
    update_weight,
)
from .metrics import MetricReport, l2_error, psnr, ssim
from .operators import (
    BlockDownsample,
    Codec,
    GaussianBlur,
    Identity,
    IdentityCodec,
    InpaintingMask,
    LinearOperator,
    Measurement,
    OrthonormalCodec,
    make_measurement,
    residual_norm_sq,
)
from .oracle import (
    GaussianPosterior,
    GridPosterior,
    grid_posterior,
    linear_gaussian_posterior,
)
from .sampler import (
    DEFAULT_ETA,
    SamplerConfig,
    StepOutput,
    ancestral_update,
    gluing_gradient,
    guided_step,
    measurement_gradient,
    tweedie_estimate,
)
from .schedule import DiffusionSchedule, build_linear_schedule, marginal_coeffs
from .score import GaussianScore, GmmScore, ScoreModel, score_jacobian_vp

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "Ensemble",
    "FilterConfig",
    "Particle",
    "RunReport",
    "degeneracy",
    "effective_sample_size",
    "init_ensemble",
    "maybe_resample",
    "normalize_weights",
    "prune",
    "run_particle_filter",
    "update_weight",
    "MetricReport",
    "l2_error",
    "psnr",
    "ssim",
    "BlockDownsample",
    "Codec",
    "GaussianBlur",
    "Identity",
    "IdentityCodec",
    "InpaintingMask",
    "LinearOperator",
    "Measurement",
    "OrthonormalCodec",
    "make_measurement",
    "residual_norm_sq",
    "GaussianPosterior",
    "GridPosterior",
    "grid_posterior",
    "linear_gaussian_posterior",
    "DEFAULT_ETA",
    "SamplerConfig",
    "StepOutput",
    "ancestral_update",
    "gluing_gradient",
    "guided_step",
    "measurement_gradient",
    "tweedie_estimate",
    "DiffusionSchedule",
    "build_linear_schedule",
    "marginal_coeffs",
    "GaussianScore",
    "GmmScore",
    "ScoreModel",
    "score_jacobian_vp",
    "__version__",
]
