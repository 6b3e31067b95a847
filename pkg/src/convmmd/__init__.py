"""Noise-aware parametric estimation by minimizing kernel discrepancies
between noise-convolved distributions."""

from ._version import __version__
from .asymptotics import (
    SandwichEstimate,
    ci_from_covariance,
    closed_form_gaussian_cov,
    sandwich_covariance,
)
from .baselines import EmResult, em_gmm, logistic_mle, ols
from .errors import (
    ConfigError,
    ConvMmdError,
    CurvatureNotInvertibleError,
    DegenerateDataError,
    DimensionMismatchError,
    InvalidBandwidthError,
    NonFiniteParameterError,
    SeparationError,
    UnsupportedFamilyError,
)
from .kernels import (
    KernelMixture,
    convolved_gaussian_bandwidth,
    gaussian_kernel,
    gram,
    lipschitz_constant_gaussian,
    median_heuristic,
    mixture_kernel,
    multiscale_bandwidths,
)
from .mmd import (
    MmdEstimate,
    convmmd_objective,
    deviation_bound,
    mmd2_biased,
    mmd2_unbiased,
    noise_shift_bound,
    variance_inflation_bound,
)
from .models import (
    GaussianLocationModel,
    GaussianMixtureModel1D,
    GaussianScaleModel,
    LinearEivModel,
    LogisticEivModel,
    gmm_params,
    gmm_theta,
)
from .noise import (
    CoordinateNoise,
    Fixed,
    HierarchicalUniform,
    NoiseModel,
    PerObservation,
    characteristic_function,
    mean_alpha,
    sample_noise,
    total_mean_alpha,
)
from .optim import FitConfig, FitResult, estimate_gradient, fit, warm_start
from .simlab import (
    ExperimentReport,
    ExperimentSpec,
    derive_rng,
    derive_seed,
    gen_eivr_data,
    gen_gmm_data,
    gen_logistic_data,
    load_report,
    metric_brier,
    metric_density_mae,
    metric_mae_sorted,
    run_experiment,
    write_report,
)
