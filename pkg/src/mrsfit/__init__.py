"""mrsfit: a spectral-fitting workbench for simulated proton MRS.

Simulates spectra from a parametric linear-combination signal model,
quantifies metabolite amplitudes with model-based fitting, supervised and
self-supervised networks, and test-time adaptation, and evaluates
in-distribution vs out-of-distribution behavior.
"""

__version__ = "0.1.0"

from .axis import ComplexSpectrum, SpectralAxis, TimeSignal, build_axis, to_frequency_domain
from .basis import (
    BasisSet,
    MetaboliteSpec,
    Peak,
    default_basis,
    default_basis_description,
    load_basis,
    save_basis,
    synthesize_basis,
)
from .errors import ConfigurationError, NumericError, ValidationError
from .metrics import MetricSummary, RegressionStats, aggregate, mae, mosae, optimal_scale, regression_stats
from .priors import PriorTable, Scenario, central_range, default_priors
from .signal_model import (
    ModelParams,
    NoiseSpec,
    RandomWalkSpec,
    add_noise,
    apply_random_walk,
    compute_snr,
    forward_model,
    metabolite_spectrum,
    residual_gradient,
    residual_loss,
)
from .simulate import SampleRecord, generate_dataset, make_sweep, sample_params
from .strategies import (
    AdaptConfig,
    FitOptions,
    TrainConfig,
    TrainingStream,
    fit_model_based,
    normalize,
    predict,
    predict_batch,
    tta_domain,
    tta_instance,
    tta_online,
    train_self_supervised,
    train_supervised,
)
