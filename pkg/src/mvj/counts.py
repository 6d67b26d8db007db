"""Variance bounds, dispersion decomposition and the bounded-count sampler.

Notation: ``Delta(x)`` is the floor of ``x``; ``R(mu)`` the smallest variance
any integer variable with mean ``mu`` can have; ``mu(d - mu)`` the largest
variance on ``{0, ..., d}``.  The sampler ``D(mu, r, u0, u1, u2)`` draws a
two-point mixture whose conditional variance ``Psi_r(mu | d)`` interpolates
between these bounds as the dispersion draw ``r`` moves from 0 to 1.

Means are accepted on the closed range ``[0, d]``; ``mu == d`` is treated as
a point mass at ``d`` (zero variance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_mu(mu, d):
    mu = np.asarray(mu, dtype=float)
    if d < 1 or int(d) != d:
        raise ValueError(f"d must be a positive integer, got {d}")
    if np.any(~np.isfinite(mu)) or np.any(mu < 0) or np.any(mu > d):
        raise ValueError(f"mean must lie in [0, {d}]")
    return mu


def _check_unit(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)) or np.any(~(x <= 1)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class DispersionMoments:
    """First two moments ``(E r, E r^2)`` of the dispersion variable ``r``.

    Only the region ``vartheta1**2 <= vartheta2 <= vartheta1`` is realizable by
    a law on ``[0, 1]``; anything else is rejected.
    """

    vartheta1: float
    vartheta2: float

    def __post_init__(self):
        t1, t2 = float(self.vartheta1), float(self.vartheta2)
        if not (0.0 <= t1 <= 1.0 and 0.0 <= t2 <= 1.0):
            raise ValueError(f"moments must lie in [0, 1], got {(t1, t2)}")
        if t2 > t1 + 1e-12 or t2 < t1 * t1 - 1e-12:
            raise ValueError(
                f"(vartheta1, vartheta2) = {(t1, t2)} is not a moment pair of a law on [0, 1]"
            )
        object.__setattr__(self, "vartheta1", t1)
        object.__setattr__(self, "vartheta2", t2)

    def as_array(self) -> np.ndarray:
        return np.array([self.vartheta1, self.vartheta2])


def project_moments(v) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{t1**2 <= t2 <= t1, 0 <= t1 <= 1}``.

    The region is convex (bounded above by the chord ``t2 = t1`` and below by
    the parabola), so the projection is unique.
    """
    t1, t2 = (float(x) for x in v)
    if t1 * t1 <= t2 <= t1 and 0.0 <= t1 <= 1.0:
        return np.array([t1, t2])
    candidates = []
    # chord t2 = t1, t1 in [0, 1]
    a = min(max(0.5 * (t1 + t2), 0.0), 1.0)
    candidates.append((a, a))
    # parabola t2 = a^2: stationarity gives 2a^3 + (1 - 2 t2) a - t1 = 0
    for root in np.roots([2.0, 0.0, 1.0 - 2.0 * t2, -t1]):
        if abs(root.imag) < 1e-10:
            a = min(max(root.real, 0.0), 1.0)
            candidates.append((a, a * a))
    candidates.extend([(0.0, 0.0), (1.0, 1.0)])
    best = min(candidates, key=lambda p: (p[0] - t1) ** 2 + (p[1] - t2) ** 2)
    return np.array(best, dtype=float)


def floor_delta(c):
    """Greatest integer not exceeding ``c``."""
    f = np.floor(np.asarray(c, dtype=float))
    return int(f) if np.ndim(f) == 0 else f.astype(np.int64)


def variance_lower(c):
    """``R(c) = {Delta(c) + 1 - c}{c - Delta(c)}``, the minimal variance."""
    c = np.asarray(c, dtype=float)
    f = np.floor(c)
    return _out((f + 1.0 - c) * (c - f))


def variance_upper(mu, d: int):
    """``mu(d - mu)``, the maximal variance on ``{0, ..., d}``."""
    mu = _check_mu(mu, d)
    return _out(mu * (d - mu))


def psi_r(mu, r, d: int):
    """Conditional variance of the sampler given the dispersion draw ``r``."""
    mu = _check_mu(mu, d)
    r = _check_unit(r, "r")
    f = np.minimum(np.floor(mu), d - 1)
    val = (mu - (1.0 - r) * f) * ((1.0 - r) * (f + 1.0) + r * d - mu)
    return _out(np.where(mu >= d, 0.0, val))


def variance_components(mu, d: int):
    """Coefficients ``(V1, V2)`` of ``vartheta1`` and ``vartheta2`` in the excess variance."""
    mu = _check_mu(mu, d)
    f = np.floor(mu)
    v1 = (mu - f) * (d - f - 1.0) + f * (f + 1.0 - mu)
    v2 = f * (d - f - 1.0)
    at_top = mu >= d
    return _out(np.where(at_top, 0.0, v1)), _out(np.where(at_top, 0.0, v2))


def conditional_variance(mu, moments: DispersionMoments, d: int):
    """``R(mu) + vartheta1 V1(mu) + vartheta2 V2(mu)``."""
    v1, v2 = variance_components(mu, d)
    val = (
        np.asarray(variance_lower(mu))
        + moments.vartheta1 * np.asarray(v1)
        + moments.vartheta2 * np.asarray(v2)
    )
    return _out(val)


def random_round(mu, u):
    """First-order random rounding: ``Delta(mu) + 1(u >= 1 + Delta(mu) - mu)``."""
    mu = np.asarray(mu, dtype=float)
    u = _check_unit(u, "u")
    f = np.floor(mu)
    out = (f + (u >= 1.0 + f - mu)).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def binary_mix(kappa1, kappa2, mu, u0):
    """Two-point variable on ``{kappa1, kappa2}`` with mean ``mu``."""
    k1 = np.asarray(kappa1, dtype=float)
    k2 = np.asarray(kappa2, dtype=float)
    mu = np.asarray(mu, dtype=float)
    u0 = _check_unit(u0, "u0")
    if np.any(k1 > mu) or np.any(mu >= k2):
        raise ValueError("binary_mix requires kappa1 <= mu < kappa2")
    thr = (k2 - mu) / (k2 - k1)
    out = np.where(u0 <= thr, k1, k2).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def kappa_bounds(mu, r, u1, u2, d: int):
    """Random support points ``(kappa1, kappa2)`` bracketing ``mu``."""
    mu = _check_mu(mu, d)
    r = _check_unit(r, "r")
    f = np.floor(mu)
    k1 = np.asarray(random_round((1.0 - r) * f, u1))
    k2 = np.asarray(random_round((1.0 - r) * (f + 1.0) + r * d, u2))
    # guard against floating round-off pushing an endpoint past its range
    k1 = np.clip(k1, 0, f).astype(np.int64)
    k2 = np.clip(k2, f + 1, d).astype(np.int64)
    if k1.ndim == 0:
        return int(k1), int(k2)
    return k1, k2


def sample_bounded_count(mu, r, u0, u1, u2, d: int):
    """Draw ``D(mu, r, u0, u1, u2)`` from explicit uniforms.

    Conditional on ``r`` the draw has mean ``mu`` and variance
    ``psi_r(mu, r, d)``.  ``mu == d`` returns ``d``.
    """
    mu = _check_mu(mu, d)
    top = mu >= d
    mu_safe = np.where(top, 0.0, mu)
    k1, k2 = kappa_bounds(mu_safe, r, u1, u2, d)
    out = np.asarray(binary_mix(k1, k2, mu_safe, u0))
    out = np.where(top, d, out).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def _round_atoms(x):
    f = math.floor(x)
    frac = x - f
    if frac == 0.0:
        return [(int(f), 1.0)]
    return [(int(f), 1.0 - frac), (int(f) + 1, frac)]


def sampler_atoms(mu: float, r: float, d: int) -> dict[int, float]:
    """Exact law of ``D(mu, r, U0, U1, U2)`` for fixed ``(mu, r)``.

    Every random step thresholds a uniform, so the distribution is a finite
    set of atoms with closed-form probabilities.
    """
    _check_mu(mu, d)
    _check_unit(r, "r")
    if mu >= d:
        return {int(d): 1.0}
    f = math.floor(mu)
    law: dict[int, float] = {}
    for k1, p1 in _round_atoms((1.0 - r) * f):
        for k2, p2 in _round_atoms((1.0 - r) * (f + 1.0) + r * d):
            k1c, k2c = min(max(k1, 0), f), min(max(k2, f + 1), d)
            w_low = (k2c - mu) / (k2c - k1c)
            law[k1c] = law.get(k1c, 0.0) + p1 * p2 * w_low
            law[k2c] = law.get(k2c, 0.0) + p1 * p2 * (1.0 - w_low)
    return {k: p for k, p in law.items() if p > 0.0}


def atom_moments(law: dict[int, float]) -> tuple[float, float]:
    """Mean and variance of a finite law given as ``{value: probability}``."""
    mean = sum(k * p for k, p in law.items())
    var = sum((k - mean) ** 2 * p for k, p in law.items())
    return mean, var
