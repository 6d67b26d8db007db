"""The MVJ(p1, p2) process: parameters, simulation and second-order structure.

The model is::

    xi_t = c + sum_i phi_i D_{t-i} + sum_j psi_j mu_{t-j}
    mu_t = CL_sigma(xi_t | d)
    D_t  = X(kappa1(mu_t, r_t, U1t), kappa2(mu_t, r_t, U2t), U0t)

with ``r_t`` i.i.d. on ``[0, 1]`` and observations ``Y_t = a + D_t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .counts import DispersionMoments, conditional_variance
from .links import LinkSpec, scale_factor
from .rng import stream

ROOT_TOL = 1e-8


@dataclass(frozen=True)
class ModelSpec:
    """Order ``(p1, p2)``, bound ``d``, link adjustment ``sigma`` and offset ``a``."""

    p1: int
    p2: int
    d: int
    sigma: float = 1.0
    offset_a: int = 0

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 0:
            raise ValueError(f"need p1 >= 1 and p2 >= 0, got ({self.p1}, {self.p2})")
        LinkSpec(self.sigma, self.d)

    @property
    def link(self) -> LinkSpec:
        return LinkSpec(self.sigma, self.d)

    @property
    def order(self) -> tuple[int, int]:
        return (self.p1, self.p2)

    @property
    def n_params(self) -> int:
        return 1 + self.p1 + self.p2


@dataclass(frozen=True)
class ThetaParams:
    """Mean-recursion coefficients ``(c, phi_1..phi_p1, psi_1..psi_p2)``."""

    c: float
    phi: tuple[float, ...]
    psi: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "phi", tuple(float(x) for x in self.phi))
        object.__setattr__(self, "psi", tuple(float(x) for x in self.psi))
        if not np.all(np.isfinite(self.as_vector())):
            raise ValueError("theta must be finite")

    @classmethod
    def from_vector(cls, vec, p1: int, p2: int) -> "ThetaParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (1 + p1 + p2,):
            raise ValueError(
                f"order ({p1}, {p2}) needs {1 + p1 + p2} coefficients, got {vec.size}"
            )
        return cls(vec[0], tuple(vec[1 : 1 + p1]), tuple(vec[1 + p1 :]))

    def as_vector(self) -> np.ndarray:
        return np.array((self.c, *self.phi, *self.psi), dtype=float)

    @property
    def order(self) -> tuple[int, int]:
        return (len(self.phi), len(self.psi))

    def in_theta0(self) -> bool:
        return sum(map(abs, self.phi)) + sum(map(abs, self.psi)) < 1.0

    def in_theta1(self) -> bool:
        coefs = (self.c, *self.phi, *self.psi)
        return all(x >= 0 for x in coefs) and sum(coefs) < 1.0

    def check_order(self, spec: ModelSpec):
        if self.order != spec.order:
            raise ValueError(f"theta has order {self.order}, model is {spec.order}")


@dataclass(frozen=True)
class RDistribution:
    """Law of the dispersion variable ``r_t`` on ``[0, 1]``.

    ``kind`` is ``"beta"`` (params ``(alpha, beta)``), ``"constant"``
    (params ``(r0,)``) or ``"moments"`` (params ``(vartheta1, vartheta2)``;
    usable for analytic variances only, not for sampling).
    """

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        if self.kind == "beta":
            a, b = self.params
            if not (a > 0 and b > 0):
                raise ValueError(f"Beta shapes must be positive, got {(a, b)}")
        elif self.kind == "constant":
            (r0,) = self.params
            if not 0.0 <= r0 <= 1.0:
                raise ValueError(f"constant r must lie in [0, 1], got {r0}")
        elif self.kind == "moments":
            DispersionMoments(*self.params)
        else:
            raise ValueError(f"unknown r distribution {self.kind!r}")

    @classmethod
    def beta(cls, alpha: float, beta: float) -> "RDistribution":
        return cls("beta", (alpha, beta))

    @classmethod
    def constant(cls, r0: float) -> "RDistribution":
        return cls("constant", (r0,))

    def moments(self) -> DispersionMoments:
        if self.kind == "beta":
            a, b = self.params
            return DispersionMoments(a / (a + b), a * (a + 1) / ((a + b) * (a + b + 1)))
        if self.kind == "constant":
            (r0,) = self.params
            return DispersionMoments(r0, r0 * r0)
        return DispersionMoments(*self.params)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "beta":
            return rng.beta(*self.params, size=n)
        if self.kind == "constant":
            return np.full(n, self.params[0])
        raise ValueError("a moments-only r distribution cannot be sampled")

    def describe(self) -> str:
        return f"{self.kind}:{','.join(repr(p) for p in self.params)}"


@dataclass
class SimulatedPath:
    D: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    r: np.ndarray
    seed: int | None
    spec: ModelSpec
    theta: ThetaParams
    rdist: RDistribution
    burn_in: int = 0

    @property
    def Y(self) -> np.ndarray:
        return self.D + self.spec.offset_a


@dataclass(frozen=True)
class StationarityReport:
    psi_poly_ok: bool
    phi_star_ok: bool
    theta0_member: bool
    theta1_member: bool
    psi_roots: tuple = field(default=(), repr=False)
    phi_star_roots: tuple = field(default=(), repr=False)

    @property
    def ok(self) -> bool:
        return self.psi_poly_ok and self.phi_star_ok


def _roots_outside_unit_disk(coefs) -> tuple[bool, np.ndarray]:
    """Whether all roots of ``1 - sum_j a_j z^j`` lie outside the closed unit disk."""
    a = np.trim_zeros(np.asarray(coefs, dtype=float), "b")
    if a.size == 0:
        return True, np.array([])
    # roots of the reciprocal polynomial are eigenvalues of the companion matrix
    comp = np.zeros((a.size, a.size))
    comp[0, :] = a
    comp[1:, :-1] = np.eye(a.size - 1)
    eig = np.linalg.eigvals(comp)
    roots = np.array([1.0 / e for e in eig if e != 0])
    if np.sum(np.abs(a)) < 1.0:
        return True, roots
    return bool(np.all(np.abs(eig) < 1.0 - ROOT_TOL)), roots


def check_stationarity(theta: ThetaParams, spec: ModelSpec | None = None) -> StationarityReport:
    """Root conditions on ``psi(z)`` and ``phi_*(z)`` plus parameter-space membership.

    Irreducibility and aperiodicity of the state chain are a standing
    assumption and are not checked.
    """
    if spec is not None:
        theta.check_order(spec)
    p1, p2 = theta.order
    p = max(p1, p2)
    psi_ok, psi_roots = _roots_outside_unit_disk(theta.psi)
    plus = np.zeros(p)
    plus[:p1] += np.maximum(theta.phi, 0.0)
    plus[:p2] += np.maximum(theta.psi, 0.0)
    phi_ok, phi_roots = _roots_outside_unit_disk(plus)
    return StationarityReport(
        psi_poly_ok=psi_ok,
        phi_star_ok=phi_ok,
        theta0_member=theta.in_theta0(),
        theta1_member=theta.in_theta1(),
        psi_roots=tuple(psi_roots),
        phi_star_roots=tuple(phi_roots),
    )


def simulate_mvj(
    theta: ThetaParams,
    rdist: RDistribution,
    spec: ModelSpec,
    T: int,
    burn_in: int = 500,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
) -> SimulatedPath:
    """Simulate ``T`` observations after discarding ``burn_in`` steps.

    Pre-sample count lags start at ``round(d/2)`` and mean lags at ``d/2``.
    Pass either ``seed`` (a Philox stream is built from it) or a ready
    ``rng``.
    """
    theta.check_order(spec)
    if T < 1 or burn_in < 0:
        raise ValueError("need T >= 1 and burn_in >= 0")
    if rng is None:
        rng = stream(seed)
    n = T + burn_in
    r = rdist.sample(rng, n)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("r draws fall outside [0, 1]")
    U = rng.random((3, n))
    d = spec.d
    D, mu, xi = _kernels.simulate_path(
        theta.c,
        np.asarray(theta.phi, dtype=float),
        np.asarray(theta.psi, dtype=float),
        float(spec.sigma),
        float(d),
        r,
        U[0],
        U[1],
        U[2],
        float(math.floor(0.5 * d + 0.5)),
        0.5 * d,
    )
    return SimulatedPath(
        D=D[burn_in:].astype(np.int64),
        mu=mu[burn_in:],
        xi=xi[burn_in:],
        r=r[burn_in:],
        seed=seed,
        spec=spec,
        theta=theta,
        rdist=rdist,
        burn_in=burn_in,
    )


def _linear_coefficients(theta: ThetaParams, spec: ModelSpec):
    theta.check_order(spec)
    if not theta.in_theta1():
        raise ValueError("the linear representation requires theta in Theta_1")
    s = scale_factor(spec.link)
    c_star = theta.c * s + 0.5 * spec.d * (1.0 - s)
    phi_star = s * np.asarray(theta.phi)
    psi_star = s * np.asarray(theta.psi)
    return c_star, phi_star, psi_star


def stationary_mean(theta: ThetaParams, spec: ModelSpec) -> float:
    """Stationary mean ``c* / (1 - sum phi* - sum psi*)`` for theta in Theta_1."""
    c_star, phi_star, psi_star = _linear_coefficients(theta, spec)
    return float(c_star / (1.0 - phi_star.sum() - psi_star.sum()))


def _ar_star(phi_star, psi_star):
    p = max(phi_star.size, psi_star.size)
    ar = np.zeros(p)
    ar[: phi_star.size] += phi_star
    ar[: psi_star.size] += psi_star
    return ar


def pi_weights(theta: ThetaParams, spec: ModelSpec, n_terms: int | None = None) -> np.ndarray:
    """Causal moving-average weights of ``{1 - phi*(B)}^{-1}{1 + delta*(B)}``.

    With ``n_terms=None`` the expansion runs until the weights drop below
    ``1e-14`` (at least 20 terms).
    """
    _, phi_star, psi_star = _linear_coefficients(theta, spec)
    ar = _ar_star(phi_star, psi_star)
    ok, _ = _roots_outside_unit_disk(ar)
    if not ok:
        raise ValueError("moving-average expansion does not converge")
    ma = -psi_star
    if n_terms is None:
        n_terms = 10**6
        adaptive = True
    else:
        adaptive = False
    w = [1.0]
    n = 1
    while n < n_terms:
        val = ma[n - 1] if n <= ma.size else 0.0
        for k in range(1, min(n, ar.size) + 1):
            val += ar[k - 1] * w[n - k]
        w.append(val)
        n += 1
        if adaptive and n > max(20, ar.size + ma.size) and max(
            abs(x) for x in w[-max(ar.size, 1) :]
        ) < 1e-14:
            break
    return np.array(w)


def theoretical_acf(theta: ThetaParams, spec: ModelSpec, max_lag: int) -> np.ndarray:
    """Autocorrelations ``rho_1..rho_max_lag`` of the linear-regime process."""
    w = pi_weights(theta, spec)
    w = np.concatenate([w, np.zeros(max_lag + 1)])
    m = w.size - max_lag - 1
    g0 = np.dot(w[:m], w[:m])
    return np.array([np.dot(w[:m], w[k : k + m]) / g0 for k in range(1, max_lag + 1)])


def innovation_variance(
    theta: ThetaParams,
    rdist: RDistribution,
    spec: ModelSpec,
    T: int = 100_000,
    burn_in: int = 500,
    seed: int | None = 0,
) -> float:
    """Monte Carlo estimate of ``E(e_t^2) = E{R(mu_t) + V(mu_t)}``."""
    path = simulate_mvj(theta, rdist, spec, T, burn_in, seed)
    return float(np.mean(conditional_variance(path.mu, rdist.moments(), spec.d)))


def theoretical_autocovariance(
    theta: ThetaParams,
    rdist: RDistribution,
    spec: ModelSpec,
    max_lag: int,
    **mc_kwargs,
) -> np.ndarray:
    """``gamma_0..gamma_max_lag`` with the innovation variance estimated by simulation."""
    w = pi_weights(theta, spec)
    w = np.concatenate([w, np.zeros(max_lag + 1)])
    m = w.size - max_lag - 1
    e2 = innovation_variance(theta, rdist, spec, **mc_kwargs)
    return np.array([e2 * np.dot(w[:m], w[k : k + m]) for k in range(max_lag + 1)])


def fitted_means(D, theta: ThetaParams, spec: ModelSpec, extra: int = 0) -> np.ndarray:
    """Truncated-recursion means; ``extra=1`` appends the one-step-ahead mean."""
    theta.check_order(spec)
    D = np.asarray(D, dtype=float)
    if D.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if np.any(D < 0) or np.any(D > spec.d) or np.any(D != np.floor(D)):
        raise ValueError(f"counts must be integers in [0, {spec.d}]")
    mu, _ = _kernels.mu_path(
        D,
        D.size + extra,
        theta.c,
        np.asarray(theta.phi, dtype=float),
        np.asarray(theta.psi, dtype=float),
        float(spec.sigma),
        float(spec.d),
    )
    return mu


def one_step_forecast(
    history,
    theta: ThetaParams,
    moments: DispersionMoments,
    spec: ModelSpec,
) -> tuple[float, float]:
    """Predictive mean ``mu_{T+1}`` and variance ``R + vartheta1 V1 + vartheta2 V2``."""
    history = np.asarray(history)
    if history.size == 0:
        raise ValueError("history is empty")
    mean = float(fitted_means(history, theta, spec, extra=1)[-1])
    return mean, float(conditional_variance(mean, moments, spec.d))

