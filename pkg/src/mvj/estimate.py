"""Conditional least-squares estimation of MVJ models.

``ols_fit`` minimizes ``sum_t {D_t - mu_t(theta)}^2`` with the truncated
mean recursion (pre-sample values set to zero).  ``owls_fit`` re-minimizes
with inverse estimated conditional variances as weights.  The dispersion
moments ``vartheta`` come from a closed-form regression of squared OLS
residuals on ``(V1(mu_t), V2(mu_t))``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._optim import minimize_projected, project_l1_ball
from .counts import (
    DispersionMoments,
    project_moments,
    variance_components,
    variance_lower,
)
from .links import scale_factor
from .process import ModelSpec, ThetaParams, fitted_means
from .rng import stream

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """No multistart run reached the convergence tolerance."""

    def __init__(self, message, traces=None):
        super().__init__(message)
        self.traces = traces or []


class SingularMatrixError(np.linalg.LinAlgError):
    """An information matrix is rank deficient."""


@dataclass(frozen=True)
class FitConfig:
    """Estimator settings.

    The feasible set is ``|c| <= c_bound`` (default ``2d``) and
    ``sum|phi| + sum|psi| <= 1 - margin``.
    """

    method: str = "ols"
    margin: float = 1e-3
    c_bound: float | None = None
    n_starts: int = 8
    gtol: float = 1e-7
    max_iter: int = 500
    variance_floor: float = 1e-8
    bootstrap_reps: int = 0
    bootstrap_seed: int = 0
    covariances: bool = True

    def __post_init__(self):
        if self.method not in ("ols", "owls"):
            raise ValueError(f"method must be 'ols' or 'owls', got {self.method!r}")
        if not self.margin > 0:
            raise ValueError("margin must be positive")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass
class FitResult:
    spec: ModelSpec
    method: str
    theta_hat: ThetaParams
    vartheta_hat: DispersionMoments
    cov_theta: np.ndarray | None
    cov_vartheta: np.ndarray | None
    fitted_mu: np.ndarray
    residuals: np.ndarray
    ssr: float
    ols_ssr: float
    objective: float
    converged: bool
    n_iter: int
    trace: list = field(default_factory=list, repr=False)
    vartheta_raw: np.ndarray | None = None
    cov_theta_sandwich: np.ndarray | None = None
    sd_vartheta_bootstrap: np.ndarray | None = None
    weight_floor_hits: int = 0
    warnings: list = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.fitted_mu.size

    @property
    def sd_theta(self) -> np.ndarray | None:
        if self.cov_theta is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_theta), 0.0, None))

    @property
    def sd_vartheta(self) -> np.ndarray | None:
        if self.cov_vartheta is None:
            return None
        return np.sqrt(np.clip(np.diag(self.cov_vartheta), 0.0, None))

    @property
    def aic(self) -> float:
        from .select import aic

        return aic(self.ols_ssr, self.T, *self.spec.order)

    @property
    def bic(self) -> float:
        from .select import bic

        return bic(self.ols_ssr, self.T, *self.spec.order)


def _as_counts(D, spec: ModelSpec) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if np.any(D < 0) or np.any(D > spec.d) or np.any(D != np.floor(D)):
        raise ValueError(f"counts must be integers in [0, {spec.d}]")
    return D


def _split(theta: ThetaParams):
    return (
        theta.c,
        np.asarray(theta.phi, dtype=float),
        np.asarray(theta.psi, dtype=float),
    )


def mu_recursion(D, theta: ThetaParams, spec: ModelSpec) -> np.ndarray:
    """Truncated fitted means ``mu~_1..mu~_T``."""
    return fitted_means(D, theta, spec)


def mu_gradient(D, theta: ThetaParams, spec: ModelSpec) -> np.ndarray:
    """Jacobian of the fitted means with respect to ``(c, phi, psi)``, shape ``(T, k)``."""
    theta.check_order(spec)
    D = _as_counts(D, spec)
    _, _, G = _kernels.mu_path_grad(D, *_split(theta), float(spec.sigma), float(spec.d))
    return G


def objective(D, theta: ThetaParams, spec: ModelSpec, weights=None) -> float:
    """``(1/T) sum W_t {D_t - mu_t(theta)}^2``."""
    D = _as_counts(D, spec)
    mu = fitted_means(D, theta, spec)
    W = np.ones_like(D) if weights is None else np.asarray(weights, dtype=float)
    return float(np.mean(W * (D - mu) ** 2))


def _inverse_link(m: float, spec: ModelSpec) -> float:
    s = scale_factor(spec.link)
    lo, hi = 0.5 * spec.d * (1 - s), spec.d - 0.5 * spec.d * (1 - s)
    m = min(max(m, lo), hi)
    return (m - 0.5 * spec.d * (1 - s)) / s


def starting_points(D: np.ndarray, spec: ModelSpec, config: FitConfig) -> list[np.ndarray]:
    """Deterministic multistart lattice.

    Coefficient vectors of total absolute mass 0.2 and 0.5 with all-positive,
    all-negative and alternating sign patterns; the intercept is chosen so the
    implied stationary mean matches the sample mean.
    """
    k = spec.p1 + spec.p2
    xbar = _inverse_link(float(np.mean(D)), spec)
    m = float(np.mean(D))
    alt = np.array([(-1.0) ** i for i in range(k)])
    patterns = [np.ones(k), -np.ones(k), alt, -alt]
    starts = []
    for mass in (0.5, 0.2):
        for sign in patterns:
            coef = sign * mass / k
            c = xbar - coef.sum() * m
            starts.append(np.concatenate([[c], coef]))
    unique = []
    for x in starts:
        if not any(np.allclose(x, u) for u in unique):
            unique.append(x)
    return unique[: config.n_starts]


def _feasible_projector(spec: ModelSpec, config: FitConfig):
    c_bound = 2.0 * spec.d if config.c_bound is None else config.c_bound
    radius = 1.0 - config.margin

    def project(x):
        out = np.empty_like(x)
        out[0] = min(max(x[0], -c_bound), c_bound)
        out[1:] = project_l1_ball(x[1:], radius)
        return out

    def active(x, g):
        rows = []
        n = x.size
        if abs(x[0]) >= c_bound * (1 - 1e-12) and np.sign(x[0]) == -np.sign(g[0]):
            rows.append(np.eye(n)[0])
        b = x[1:]
        if np.abs(b).sum() >= radius * (1 - 1e-10):
            normal = np.zeros(n)
            normal[1:] = np.sign(b)
            rows.append(normal)
            for i in np.nonzero(b == 0)[0]:
                rows.append(np.eye(n)[i + 1])
        return np.array(rows).reshape(len(rows), n)

    project.active = active
    return project


def _minimize_theta(D, W, spec: ModelSpec, config: FitConfig, extra_starts=()):
    p1 = spec.p1
    sigma, d = float(spec.sigma), float(spec.d)

    def fun(x):
        return _kernels.weighted_objective(D, W, x[0], x[1 : 1 + p1], x[1 + p1 :], sigma, d)

    project = _feasible_projector(spec, config)
    runs = []
    for x0 in [*extra_starts, *starting_points(D, spec, config)]:
        runs.append(
            minimize_projected(
                fun, x0, project, gtol=config.gtol, max_iter=config.max_iter, active=project.active
            )
        )
    good = [r for r in runs if r.converged]
    if not good:
        raise ConvergenceError(
            f"no multistart run converged for order {spec.order}",
            traces=[(r.message, r.trace) for r in runs],
        )
    best_f = min(r.fun for r in good)
    ties = [r for r in good if r.fun <= best_f + 1e-10 * max(1.0, abs(best_f))]
    return min(ties, key=lambda r: np.linalg.norm(r.x))


def _check_length(D, spec):
    if D.size <= 3 + spec.p1 + spec.p2:
        raise ValueError(f"need more than {3 + spec.p1 + spec.p2} observations, got {D.size}")


def fit_theta(D, spec: ModelSpec, config: FitConfig | None = None, weights=None):
    """Bare minimization; returns ``(theta_hat, optimizer result)``."""
    config = config or FitConfig()
    D = _as_counts(D, spec)
    _check_length(D, spec)
    W = np.ones_like(D) if weights is None else np.asarray(weights, dtype=float)
    res = _minimize_theta(D, W, spec, config)
    return ThetaParams.from_vector(res.x, spec.p1, spec.p2), res


def vartheta_normal_equations(V: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form ``(sum V V')^{-1} sum V y`` without projection."""
    A = V.T @ V
    return np.linalg.solve(A, V.T @ y)


def vartheta_fit(D, mu_hat, d: int, weights_floor: float = 1e-12):
    """Moment estimator of ``(vartheta1, vartheta2)`` from OLS fitted means.

    Returns ``(moments, cov, raw)``: the estimate projected onto the
    realizable moment region, a heteroskedasticity-robust covariance that
    treats ``mu_hat`` as fixed (so it ignores first-stage estimation error),
    and the unprojected regression coefficients.
    """
    D = np.asarray(D, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if D.shape != mu_hat.shape:
        raise ValueError("series and fitted means must be aligned")
    eps = D - mu_hat
    y = eps**2 - variance_lower(mu_hat)
    V = np.column_stack(variance_components(mu_hat, d))
    A = V.T @ V
    full_rank = np.all(np.diag(A) > weights_floor) and np.linalg.cond(A) < 1e12
    if full_rank:
        raw = np.linalg.solve(A, V.T @ y)
        u = y - V @ raw
        A_inv = np.linalg.inv(A)
        meat = (V * (u**2)[:, None]).T @ V
        cov = A_inv @ meat @ A_inv
    else:
        warnings.warn(
            "V2(mu) carries no information (fitted means too close to the "
            "boundary); estimating vartheta1 only",
            RuntimeWarning,
            stacklevel=2,
        )
        v1 = V[:, 0]
        denom = v1 @ v1
        t1 = (v1 @ y) / denom if denom > 0 else 0.0
        raw = np.array([t1, 0.0])
        u = y - v1 * t1
        cov = np.zeros((2, 2))
        if denom > 0:
            cov[0, 0] = (v1**2 * u**2).sum() / denom**2
    moments = DispersionMoments(*project_moments(raw))
    return moments, cov, raw


def vartheta_bootstrap_sd(
    D,
    mu_hat,
    d: int,
    n_boot: int = 500,
    block: int | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Moving-block bootstrap SD of the projected ``vartheta`` estimate (``mu_hat`` held fixed)."""
    D = np.asarray(D, dtype=float)
    mu_hat = np.asarray(mu_hat, dtype=float)
    T = D.size
    block = block or math.ceil(T ** (1.0 / 3.0))
    y = (D - mu_hat) ** 2 - variance_lower(mu_hat)
    V = np.column_stack(variance_components(mu_hat, d))
    rng = stream(seed)
    n_blocks = math.ceil(T / block)
    draws = []
    for _ in range(n_boot):
        starts = rng.integers(0, T - block + 1, size=n_blocks)
        idx = (starts[:, None] + np.arange(block)).ravel()[:T]
        Vb, yb = V[idx], y[idx]
        try:
            raw = vartheta_normal_equations(Vb, yb)
        except np.linalg.LinAlgError:
            continue
        draws.append(project_moments(raw))
    return np.std(np.array(draws), axis=0, ddof=1)


def _param_names(spec: ModelSpec) -> list[str]:
    return (
        ["c"]
        + [f"phi_{i}" for i in range(1, spec.p1 + 1)]
        + [f"psi_{j}" for j in range(1, spec.p2 + 1)]
    )


def _safe_inverse(K: np.ndarray, names: list[str], label: str):
    evals, evecs = np.linalg.eigh(0.5 * (K + K.T))
    top = max(evals[-1], 0.0)
    if top == 0.0 or evals[0] <= 1e-12 * top:
        v = evecs[:, 0]
        direction = " + ".join(
            f"{v[i]:.3g}*{names[i]}" for i in np.argsort(-np.abs(v)) if abs(v[i]) > 1e-3
        )
        raise SingularMatrixError(f"{label} is singular along the direction {direction}")
    cond = top / evals[0]
    if cond > 1e8:
        warnings.warn(
            f"{label} is ill-conditioned (condition number {cond:.2e}); using pseudo-inverse",
            RuntimeWarning,
            stacklevel=3,
        )
        return np.linalg.pinv(K)
    return np.linalg.inv(K)


def covariance_matrices(
    D,
    theta_hat: ThetaParams,
    vartheta_hat: DispersionMoments | None,
    weights,
    spec: ModelSpec,
) -> dict:
    """Sample-average plug-ins of the asymptotic covariances of ``theta_hat``.

    ``K1 = mean(W G G')`` and ``Gamma1 = mean(W^2 e^2 G G')`` give the
    sandwich ``K1^{-1} Gamma1 K1^{-1} / T``.  With ``vartheta_hat`` given,
    the efficient-weight information ``Sigma_inv = mean(G G' / (R + h))`` and
    ``Sigma / T`` are returned as well.
    """
    D = _as_counts(D, spec)
    theta_hat.check_order(spec)
    T = D.size
    W = np.ones(T) if weights is None else np.asarray(weights, dtype=float)
    mu, _, G = _kernels.mu_path_grad(D, *_split(theta_hat), float(spec.sigma), float(spec.d))
    e = D - mu
    names = _param_names(spec)
    K1 = (G * W[:, None]).T @ G / T
    Gamma1 = (G * (W**2 * e**2)[:, None]).T @ G / T
    K1_inv = _safe_inverse(K1, names, "K1")
    sandwich = K1_inv @ Gamma1 @ K1_inv / T
    out = {"K1": K1, "Gamma1": Gamma1, "sandwich": 0.5 * (sandwich + sandwich.T)}
    if vartheta_hat is not None:
        v1, v2 = variance_components(mu, spec.d)
        h = vartheta_hat.vartheta1 * v1 + vartheta_hat.vartheta2 * v2
        var = np.maximum(variance_lower(mu) + h, 1e-8)
        Sigma_inv = (G / var[:, None]).T @ G / T
        Sigma = _safe_inverse(Sigma_inv, names, "Sigma^{-1}")
        out["Sigma_inv"] = Sigma_inv
        out["Sigma"] = 0.5 * (Sigma + Sigma.T) / T
    return out


def _owls_weights(mu, vartheta: DispersionMoments, d, floor):
    v1, v2 = variance_components(mu, d)
    var = variance_lower(mu) + vartheta.vartheta1 * v1 + vartheta.vartheta2 * v2
    hits = int(np.sum(var < floor))
    return 1.0 / np.maximum(var, floor), hits


def _degenerate(ssr, T):
    return ssr / T < 1e-10


def ols_fit(D, spec: ModelSpec, config: FitConfig | None = None) -> FitResult:
    """Ordinary conditional least squares plus the dispersion-moment estimate."""
    config = config or FitConfig()
    D = _as_counts(D, spec)
    _check_length(D, spec)
    res = _minimize_theta(D, np.ones_like(D), spec, config)
    theta = ThetaParams.from_vector(res.x, spec.p1, spec.p2)
    mu = fitted_means(D, theta, spec)
    resid = D - mu
    ssr = float(resid @ resid)
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        moments, cov_v, raw = vartheta_fit(D, mu, spec.d)
        cov_t = None
        if config.covariances:
            if _degenerate(ssr, D.size):
                notes.append("perfect fit: theta is not identifiable from residual variation")
            else:
                cov_t = covariance_matrices(D, theta, None, None, spec)["sandwich"]
    notes.extend(str(w.message) for w in caught)
    for n in notes:
        log.warning(n)
    boot = None
    if config.bootstrap_reps > 0:
        boot = vartheta_bootstrap_sd(D, mu, spec.d, config.bootstrap_reps, seed=config.bootstrap_seed)
    return FitResult(
        spec=spec,
        method="ols",
        theta_hat=theta,
        vartheta_hat=moments,
        cov_theta=cov_t,
        cov_vartheta=cov_v,
        fitted_mu=mu,
        residuals=resid,
        ssr=ssr,
        ols_ssr=ssr,
        objective=res.fun,
        converged=res.converged,
        n_iter=res.n_iter,
        trace=res.trace,
        vartheta_raw=raw,
        cov_theta_sandwich=cov_t,
        sd_vartheta_bootstrap=boot,
        warnings=notes,
    )


def owls_fit(D, spec: ModelSpec, config: FitConfig | None = None, first_stage: FitResult | None = None) -> FitResult:
    """Two-step optimally weighted least squares.

    The OLS stage supplies ``theta_hat`` and ``vartheta_hat``; the weights
    ``1 / max(R(mu_hat) + h_hat, floor)`` are then held fixed while the
    weighted objective is re-minimized (starting from the OLS estimate as
    well as the usual lattice).
    """
    config = config or FitConfig(method="owls")
    D = _as_counts(D, spec)
    ols = first_stage or ols_fit(D, spec, config)
    W, hits = _owls_weights(ols.fitted_mu, ols.vartheta_hat, spec.d, config.variance_floor)
    res = _minimize_theta(D, W, spec, config, extra_starts=[ols.theta_hat.as_vector()])
    theta = ThetaParams.from_vector(res.x, spec.p1, spec.p2)
    mu = fitted_means(D, theta, spec)
    resid = D - mu
    ssr = float(resid @ resid)
    notes = list(ols.warnings)
    if hits:
        notes.append(f"variance floor active for {hits} weights")
    cov_t = sandwich = None
    if config.covariances and not _degenerate(ssr, D.size):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            mats = covariance_matrices(D, theta, ols.vartheta_hat, W, spec)
        notes.extend(str(w.message) for w in caught)
        cov_t, sandwich = mats["Sigma"], mats["sandwich"]
    return FitResult(
        spec=spec,
        method="owls",
        theta_hat=theta,
        vartheta_hat=ols.vartheta_hat,
        cov_theta=cov_t,
        cov_vartheta=ols.cov_vartheta,
        fitted_mu=mu,
        residuals=resid,
        ssr=ssr,
        ols_ssr=ols.ssr,
        objective=res.fun,
        converged=res.converged,
        n_iter=res.n_iter,
        trace=res.trace,
        vartheta_raw=ols.vartheta_raw,
        cov_theta_sandwich=sandwich,
        sd_vartheta_bootstrap=ols.sd_vartheta_bootstrap,
        weight_floor_hits=hits,
        warnings=notes,
    )


def fit(D, spec: ModelSpec, config: FitConfig | None = None) -> FitResult:
    config = config or FitConfig()
    if config.method == "owls":
        return owls_fit(D, spec, config)
    return ols_fit(D, spec, config)
