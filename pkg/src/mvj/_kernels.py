"""Compiled inner loops.

The recursion for the conditional mean is a sequential chain, so it is run
under numba.  Every caller that needs fitted means (estimation, forecasting,
diagnostics) goes through ``mu_path`` so the numbers agree bit for bit.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)


@njit(cache=True)
def _laplace_link(u, sigma):
    z = u / sigma
    if z <= 0.0:
        return -sigma * math.log1p(-0.5 * math.exp(z))
    return u + sigma * LN2


@njit(cache=True)
def _laplace_link_deriv(u, sigma):
    z = u / sigma
    if z <= 0.0:
        e = 0.5 * math.exp(z)
        return e / (1.0 - e)
    return 1.0


@njit(cache=True)
def cl(u, sigma, d):
    s = 0.5 * d / (0.5 * d + sigma * LN2)
    h = 0.5 * d
    if u < 0.0:
        return min(s * _laplace_link(u, sigma), h - s * h)
    if u > d:
        return max(d - s * _laplace_link(d - u, sigma), h + s * h)
    return h + s * (u - h)


@njit(cache=True)
def cld(u, sigma, d):
    s = 0.5 * d / (0.5 * d + sigma * LN2)
    if u < 0.0:
        return s * _laplace_link_deriv(u, sigma)
    if u > d:
        return s * _laplace_link_deriv(d - u, sigma)
    return s


@njit(cache=True)
def mu_path(D, n, c, phi, psi, sigma, d):
    """Truncated recursion: pre-sample D and mu are zero; returns (mu, xi) of length n.

    ``D`` may be shorter than ``n``; only lags ``D[t - i]`` with ``t - i < len(D)``
    are ever read, so ``n = len(D) + 1`` yields the one-step-ahead mean.
    """
    p1 = phi.shape[0]
    p2 = psi.shape[0]
    mu = np.zeros(n)
    xi = np.zeros(n)
    for t in range(n):
        x = c
        for i in range(1, p1 + 1):
            if t - i >= 0:
                x += phi[i - 1] * D[t - i]
        for j in range(1, p2 + 1):
            if t - j >= 0:
                x += psi[j - 1] * mu[t - j]
        xi[t] = x
        mu[t] = cl(x, sigma, d)
    return mu, xi


@njit(cache=True)
def mu_path_grad(D, c, phi, psi, sigma, d):
    """Fitted means and their Jacobian with respect to (c, phi, psi)."""
    p1 = phi.shape[0]
    p2 = psi.shape[0]
    n = D.shape[0]
    k = 1 + p1 + p2
    mu = np.zeros(n)
    xi = np.zeros(n)
    G = np.zeros((n, k))
    g = np.zeros(k)
    for t in range(n):
        x = c
        g[:] = 0.0
        g[0] = 1.0
        for i in range(1, p1 + 1):
            if t - i >= 0:
                x += phi[i - 1] * D[t - i]
                g[i] += D[t - i]
        for j in range(1, p2 + 1):
            if t - j >= 0:
                x += psi[j - 1] * mu[t - j]
                g[p1 + j] += mu[t - j]
                for m in range(k):
                    g[m] += psi[j - 1] * G[t - j, m]
        xi[t] = x
        mu[t] = cl(x, sigma, d)
        dl = cld(x, sigma, d)
        for m in range(k):
            G[t, m] = dl * g[m]
    return mu, xi, G


@njit(cache=True)
def weighted_objective(D, W, c, phi, psi, sigma, d):
    """Mean weighted squared error and its gradient."""
    mu, xi, G = mu_path_grad(D, c, phi, psi, sigma, d)
    n = D.shape[0]
    k = G.shape[1]
    f = 0.0
    grad = np.zeros(k)
    for t in range(n):
        e = D[t] - mu[t]
        f += W[t] * e * e
        for m in range(k):
            grad[m] -= 2.0 * W[t] * e * G[t, m]
    return f / n, grad / n


@njit(cache=True)
def _random_round(x, u):
    f = math.floor(x)
    if u >= 1.0 + f - x:
        return f + 1.0
    return f


@njit(cache=True)
def draw_count(mu, r, u0, u1, u2, d):
    if mu >= d:
        return d
    f = math.floor(mu)
    k1 = _random_round((1.0 - r) * f, u1)
    k2 = _random_round((1.0 - r) * (f + 1.0) + r * d, u2)
    k1 = min(max(k1, 0.0), f)
    k2 = min(max(k2, f + 1.0), float(d))
    if u0 <= (k2 - mu) / (k2 - k1):
        return k1
    return k2


@njit(cache=True)
def simulate_path(c, phi, psi, sigma, d, r, U0, U1, U2, d_init, mu_init):
    """Run the data-generating recursion; pre-sample lags are constants."""
    p1 = phi.shape[0]
    p2 = psi.shape[0]
    n = r.shape[0]
    D = np.zeros(n)
    mu = np.zeros(n)
    xi = np.zeros(n)
    for t in range(n):
        x = c
        for i in range(1, p1 + 1):
            x += phi[i - 1] * (D[t - i] if t - i >= 0 else d_init)
        for j in range(1, p2 + 1):
            x += psi[j - 1] * (mu[t - j] if t - j >= 0 else mu_init)
        xi[t] = x
        m = cl(x, sigma, d)
        mu[t] = m
        D[t] = draw_count(m, r[t], U0[t], U1[t], U2[t], d)
    return D, mu, xi
