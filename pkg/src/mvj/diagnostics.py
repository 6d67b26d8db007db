"""Residual diagnostics and sample autocorrelations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .counts import DispersionMoments, conditional_variance
from .process import ModelSpec, ThetaParams, fitted_means

VARIANCE_FLOOR = 1e-8


def sample_acf(x, max_lag: int) -> np.ndarray:
    """``rho_1..rho_max_lag`` with the biased ``1/T`` autocovariance."""
    x = np.asarray(x, dtype=float)
    T = x.size
    if T <= max_lag:
        raise ValueError(f"need more than {max_lag} observations")
    xc = x - x.mean()
    g0 = xc @ xc / T
    if g0 <= 0:
        raise ValueError("series has zero variance")
    return np.array([xc[: T - k] @ xc[k:] / T / g0 for k in range(1, max_lag + 1)])


def durbin_levinson(rho: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``rho_1..rho_n``."""
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    pacf = np.zeros(n)
    phi = np.zeros(n)
    v = 1.0
    for k in range(n):
        if k == 0:
            a = rho[0]
        else:
            a = (rho[k] - phi[:k] @ rho[k - 1 :: -1][:k]) / v
        new = phi.copy()
        new[k] = a
        new[:k] = phi[:k] - a * phi[:k][::-1]
        phi = new
        v *= 1.0 - a * a
        pacf[k] = a
    return pacf


def sample_pacf(x, max_lag: int) -> np.ndarray:
    return durbin_levinson(sample_acf(x, max_lag))


def pearson_residuals(
    D,
    theta: ThetaParams,
    vartheta: DispersionMoments,
    spec: ModelSpec,
    floor: float = VARIANCE_FLOOR,
) -> np.ndarray:
    """Standardized Pearson residuals ``(D_t - mu_t) / sqrt(var_t)``; the scale is floored at ``sqrt(floor)``."""
    D = np.asarray(D, dtype=float)
    mu = fitted_means(D, theta, spec)
    var = np.asarray(conditional_variance(mu, vartheta, spec.d))
    return (D - mu) / np.sqrt(np.maximum(var, floor))


def adequacy_stats(D, fitted, residuals) -> dict:
    """Mean absolute residual and mean squared Pearson residual."""
    D = np.asarray(D, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if not (D.shape == fitted.shape == residuals.shape):
        raise ValueError("inputs must be aligned")
    return {
        "MAR": float(np.mean(np.abs(D - fitted))),
        "MSPR": float(np.mean(residuals**2)),
    }


@dataclass
class DiagnosticsReport:
    residual_mean: float
    residual_sd: float
    max_abs_acf: float
    MAR: float
    MSPR: float
    residual_acf: np.ndarray

    def to_dict(self) -> dict:
        return {
            "residual_mean": self.residual_mean,
            "residual_sd": self.residual_sd,
            "max_abs_acf": self.max_abs_acf,
            "MAR": self.MAR,
            "MSPR": self.MSPR,
            "residual_acf": [float(x) for x in self.residual_acf],
        }


def diagnose(
    D,
    theta: ThetaParams,
    vartheta: DispersionMoments,
    spec: ModelSpec,
    lags: int = 20,
    floor: float = VARIANCE_FLOOR,
) -> DiagnosticsReport:
    D = np.asarray(D, dtype=float)
    mu = fitted_means(D, theta, spec)
    r = pearson_residuals(D, theta, vartheta, spec, floor)
    stats = adequacy_stats(D, mu, r)
    acf = sample_acf(r, lags)
    return DiagnosticsReport(
        residual_mean=float(r.mean()),
        residual_sd=float(r.std(ddof=1)),
        max_abs_acf=float(np.max(np.abs(acf))),
        MAR=stats["MAR"],
        MSPR=stats["MSPR"],
        residual_acf=acf,
    )
