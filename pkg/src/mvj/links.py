"""Clipped-Laplace link family.

The link maps the real line into the open interval ``(0, d)``. It is exactly
linear on ``[0, d]`` with slope ``scale_factor(spec)`` and has Laplace-type
tails outside, converging to the clipped ReLU as ``sigma -> 0``.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


@dataclass(frozen=True)
class LinkSpec:
    """Adjustment parameter ``sigma`` and upper count bound ``d``."""

    sigma: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))


def _check_finite(u):
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("link arguments must be finite")
    return u


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def laplace_cdf(u):
    """Standard Laplace CDF."""
    u = _check_finite(u)
    # clamp exp arguments so the unused branch never overflows
    left = 0.5 * np.exp(np.minimum(u, 0.0))
    right = 1.0 - 0.5 * np.exp(-np.maximum(u, 0.0))
    return _out(np.where(u <= 0, left, right))


def laplace_link(u, sigma: float):
    """Laplace link ``-sigma * log(1 - F(u / sigma))``.

    Evaluated as ``-sigma * log1p(-exp(u/sigma)/2)`` on the left branch and
    ``u + sigma*log(2)`` on the right branch, so large ``|u|/sigma`` is safe.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    u = np.asarray(u, dtype=float)
    z = u / sigma
    left = -sigma * np.log1p(-0.5 * np.exp(np.minimum(z, 0.0)))
    right = u + sigma * LN2
    return _out(np.where(z <= 0, left, right))


def laplace_link_deriv(u, sigma: float):
    """Derivative of :func:`laplace_link`: ``f(u/sigma) / (1 - F(u/sigma))``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    z = np.asarray(u, dtype=float) / sigma
    e = 0.5 * np.exp(np.minimum(z, 0.0))
    return _out(np.where(z <= 0, e / (1.0 - e), 1.0))


def scale_factor(spec: LinkSpec) -> float:
    """Slope of the link on ``[0, d]``: ``0.5d / (0.5d + sigma*log 2)``."""
    half = 0.5 * spec.d
    return half / (half + spec.sigma * LN2)


def clipped_relu(u, d):
    return _out(np.clip(np.asarray(u, dtype=float), 0.0, float(d)))


def clipped_laplace(u, spec: LinkSpec):
    """Clipped-Laplace link ``CL_sigma(u | d)``.

    The defining expression ``s*{L(u) - u - L(d-u)} + 0.5d(1+s)`` reduces to
    ``s*L(u)`` for ``u < 0``, the linear form ``s*u + 0.5d(1-s)`` on
    ``[0, d]`` and ``d - s*L(d-u)`` for ``u > d``; those forms are used here.
    The linear piece is written about ``d/2`` and each tail is clamped at the
    value of the linear piece at its join, so monotonicity and point symmetry
    hold in floating point as well.
    """
    u = _check_finite(u)
    d = float(spec.d)
    h = 0.5 * d
    s = scale_factor(spec)
    mid = h + s * (u - h)
    lo = np.minimum(s * np.asarray(laplace_link(np.minimum(u, 0.0), spec.sigma)), h - s * h)
    hi = np.maximum(d - s * np.asarray(laplace_link(np.minimum(d - u, 0.0), spec.sigma)), h + s * h)
    return _out(np.where(u < 0, lo, np.where(u > d, hi, mid)))


def clipped_laplace_deriv(u, spec: LinkSpec):
    """Derivative of :func:`clipped_laplace` with respect to ``u``."""
    u = _check_finite(u)
    d = float(spec.d)
    s = scale_factor(spec)
    lo = np.asarray(laplace_link_deriv(np.minimum(u, 0.0), spec.sigma))
    hi = np.asarray(laplace_link_deriv(np.minimum(d - u, 0.0), spec.sigma))
    return _out(s * np.where(u < 0, lo, np.where(u > d, hi, 1.0)))


def link(u, sigma: float, d: int):
    """Convenience dispatcher; ``sigma == 0`` routes to the clipped ReLU."""
    if sigma == 0:
        return clipped_relu(u, d)
    return clipped_laplace(u, LinkSpec(sigma, d))
