"""Monotone-gradient networks.

Two architectures whose outputs are gradients of convex functions by
construction, a forward-mode differentiation engine to train them, and
experiment harnesses: synthetic gradient-field regression, Gaussian
optimal coupling, and color-domain adaptation between images.
"""

from .activations import FAMILIES, get_family, log_cosh, logistic, softplus
from .dual import DualArray, DualScalar
from .errors import (
    ConfigError,
    DegenerateData,
    DimensionMismatch,
    FormatError,
    InvalidModel,
    InvalidSpec,
    MgnError,
    NoConvergence,
    NonFiniteLoss,
    NonSymmetric,
    NotPositiveDefinite,
    NotPSD,
    UnknownActivation,
    UnsupportedFormat,
)
from .gradfield import (
    GradFieldResult,
    evaluate_gradfield,
    field_potential,
    run_gradfield,
    true_gradient,
)
from .imaging import (
    AdaptationResult,
    adapt_apply,
    adapt_train,
    gaussian_flow_nll,
    image_pixels,
    load_image,
    save_image,
)
from .linalg import cholesky, logdet_pd, solve_lower, solve_upper_t, sqrt_psd, sym_eigen
from .models import (
    CmgnModel,
    MgnModule,
    MmgnModel,
    ModelSpec,
    ParamView,
    forward,
    init_params,
    invert,
    jacobian,
    load_model,
    param_count,
    save_model,
)
from .training import (
    AdamState,
    ArraySampler,
    TrainConfig,
    TrainReport,
    UnitSquareSampler,
    adam_step,
    flow_nll,
    mae_loss,
    param_grad,
    train,
)
from .transport import (
    CouplingReport,
    GaussianModel,
    GaussianSampler,
    bures_wasserstein_cost,
    fit_gaussian,
    gaussian_entropy,
    gaussian_from_moments,
    gaussian_kl,
    gaussian_sample,
    random_gaussian,
    run_coupling,
    standard_gaussian,
    whitening_expected_cost,
    whitening_map,
    whitening_report,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AdaptationResult",
    "ArraySampler",
    "CmgnModel",
    "ConfigError",
    "CouplingReport",
    "DegenerateData",
    "DimensionMismatch",
    "DualArray",
    "DualScalar",
    "FAMILIES",
    "FormatError",
    "GaussianModel",
    "GaussianSampler",
    "GradFieldResult",
    "InvalidModel",
    "InvalidSpec",
    "MgnError",
    "MgnModule",
    "MmgnModel",
    "ModelSpec",
    "NoConvergence",
    "NonFiniteLoss",
    "NonSymmetric",
    "NotPSD",
    "NotPositiveDefinite",
    "ParamView",
    "TrainConfig",
    "TrainReport",
    "UnitSquareSampler",
    "UnknownActivation",
    "UnsupportedFormat",
    "adam_step",
    "adapt_apply",
    "adapt_train",
    "bures_wasserstein_cost",
    "cholesky",
    "evaluate_gradfield",
    "field_potential",
    "fit_gaussian",
    "flow_nll",
    "forward",
    "gaussian_entropy",
    "gaussian_flow_nll",
    "gaussian_from_moments",
    "gaussian_kl",
    "gaussian_sample",
    "get_family",
    "image_pixels",
    "init_params",
    "invert",
    "jacobian",
    "load_image",
    "load_model",
    "log_cosh",
    "logdet_pd",
    "logistic",
    "mae_loss",
    "param_count",
    "param_grad",
    "random_gaussian",
    "run_coupling",
    "run_gradfield",
    "save_image",
    "save_model",
    "softplus",
    "solve_lower",
    "solve_upper_t",
    "sqrt_psd",
    "standard_gaussian",
    "sym_eigen",
    "train",
    "true_gradient",
    "whitening_expected_cost",
    "whitening_map",
    "whitening_report",
]
