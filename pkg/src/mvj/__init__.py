"""Bounded count time series with a joint mean-and-variance (MVJ) model."""

from .counts import (
    DispersionMoments,
    conditional_variance,
    psi_r,
    sample_bounded_count,
    sampler_atoms,
    variance_lower,
    variance_upper,
)
from .diagnostics import diagnose, pearson_residuals, sample_acf, sample_pacf
from .estimate import FitConfig, FitResult, fit, ols_fit, owls_fit
from .io import CountSeries, load_fit, load_series, save_fit
from .links import LinkSpec, clipped_laplace, clipped_laplace_deriv, clipped_relu
from .process import (
    ModelSpec,
    RDistribution,
    ThetaParams,
    check_stationarity,
    one_step_forecast,
    pi_weights,
    simulate_mvj,
    theoretical_acf,
)
from .select import OrderGrid, aic, bic, select_order

__version__ = "0.1.0"
