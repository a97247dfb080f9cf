"""Sequential Monte Carlo state estimation and benchmark harness.

Particle filters (bootstrap, auxiliary, predictive smoothing), their
regime-switching and model-averaging robustifications, Kalman-family
baselines, the two benchmark models, and a reproducible RMSE/runtime sweep
harness with a CLI (``smc-kit``).
"""

from .filters import FilterKind, FilterOutput, apf_step, bpf_step, pbps_step, run_filter
from .gaussian import (
    GaussianBelief,
    UTParams,
    ekf_step,
    kalman_step,
    run_gaussian_filter,
    run_kalman_filter,
    sigma_points,
    ukf_step,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    FilterSpec,
    RMSEReport,
    emit_outputs,
    global_rmse,
    load_config,
    rmse_at_k,
    run_experiment,
)
from .models import (
    BearingsOnlyModel,
    GrowthModel,
    LinearGaussianModel,
    Model1Spec,
    Model2Spec,
    ScenarioSpec,
    bearing,
    model1_mean,
    model1_obs_mean,
    simulate_model1,
    simulate_model2,
)
from .robust import RegimeFamily, dma_bpf_step, rs_step, run_dma_filter, run_rs_filter
from .ssm import (
    DegeneracyError,
    ParticleCloud,
    RegimeSet,
    StateSpaceModel,
    effective_sample_size,
    normalize_log_weights,
    posterior_mean,
    resample,
)
from .stochastics import (
    RngStream,
    WrappedCauchyParams,
    gaussian_logpdf,
    gaussian_sample,
    multinomial_counts,
    uniform_choice,
    wrapped_cauchy_logpdf,
    wrapped_cauchy_sample,
)

__version__ = "0.1.0"
