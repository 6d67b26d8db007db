"""Projected quasi-Newton minimization over a closed convex set.

Iterates stay feasible; every accepted step satisfies an Armijo condition
along the projected arc, so the objective never increases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{w : ||w||_1 <= radius}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    shift = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - shift, 0.0)


def _face_step(H, A, g):
    """``(H - H A' (A H A')^-1 A H) g``: the inverse-Hessian step tangent to ``A d = 0``."""
    HA = H @ A.T
    M = A @ HA
    try:
        lam = np.linalg.solve(M, HA.T @ g)
    except np.linalg.LinAlgError:
        lam = np.linalg.lstsq(M, HA.T @ g, rcond=None)[0]
    return H @ g - HA @ lam


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    n_iter: int
    message: str
    trace: list = field(default_factory=list)


def minimize_projected(
    fun,
    x0,
    project,
    gtol: float = 1e-6,
    ftol: float = 1e-13,
    max_iter: int = 500,
    active=None,
) -> OptimResult:
    """Minimize ``fun`` (returning value and gradient) over the set ``project`` maps onto.

    Convergence is declared when the projected-gradient step
    ``||x - P(x - g)||_inf`` falls below ``gtol``.  If progress stalls (line
    search failure, or relative decrease below ``ftol`` three times running)
    the run stops and counts as converged only if that step is below
    ``1000 * gtol``.

    ``active(x, g)`` may return a matrix whose rows are normals of the
    constraints binding at ``x``; the quasi-Newton step is then confined to
    that face, which keeps progress along a boundary from zig-zagging.
    """
    x = project(np.asarray(x0, dtype=float))
    f, g = fun(x)
    n = x.size
    H = np.eye(n)
    trace = [f]
    stall = 0
    bb = 1.0
    for it in range(1, max_iter + 1):
        pg = x - project(x - g)
        if np.max(np.abs(pg)) <= gtol:
            return OptimResult(x, f, g, True, it - 1, "projected gradient below tolerance", trace)

        accepted = False
        directions = [-H @ g, -bb * g]
        if active is not None:
            A = np.atleast_2d(active(x, g))
            if A.size:
                directions.insert(0, -_face_step(H, A, g))
        for direction in directions:
            alpha = 1.0
            while alpha > 1e-12:
                xn = project(x + alpha * direction)
                step = xn - x
                slope = g @ step
                if slope >= 0 or not np.any(step):
                    break
                fn, gn = fun(xn)
                if np.isfinite(fn) and fn <= f + 1e-4 * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted:
                break
        if not accepted:
            ok = np.max(np.abs(pg)) <= 1e3 * gtol
            return OptimResult(x, f, g, ok, it - 1, "line search made no progress", trace)

        s = xn - x
        y = gn - g
        sy = s @ y
        if sy > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
            bb = (s @ s) / sy
        else:
            H = np.eye(n)

        decrease = f - fn
        x, f, g = xn, fn, gn
        trace.append(f)
        stall = stall + 1 if decrease <= ftol * max(1.0, abs(f)) else 0
        if stall >= 3:
            ok = np.max(np.abs(x - project(x - g))) <= 1e3 * gtol
            return OptimResult(x, f, g, ok, it, "objective decrease stalled", trace)
    return OptimResult(x, f, g, False, max_iter, "iteration limit reached", trace)
