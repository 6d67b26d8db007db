"""Order selection with Gaussian quasi-likelihood AIC and BIC."""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .estimate import ConvergenceError, FitConfig, fit_theta
from .process import ModelSpec, fitted_means

log = logging.getLogger(__name__)


def _fit_term(ssr: float, T: int) -> float:
    if ssr < 0:
        raise ValueError("ssr must be nonnegative")
    if ssr == 0:
        warnings.warn("perfect fit: information criterion is -inf", RuntimeWarning, stacklevel=3)
        return -math.inf
    return T * math.log(ssr / T)


def aic(ssr: float, T: int, p1: int, p2: int) -> float:
    """``T log(ssr/T) + 2(3 + p1 + p2)``."""
    if T <= p1 + p2:
        raise ValueError("need T > p1 + p2")
    return _fit_term(ssr, T) + 2.0 * (3 + p1 + p2)


def bic(ssr: float, T: int, p1: int, p2: int) -> float:
    """``T log(ssr/T) + log(T - p - 1)(3 + p1 + p2)`` with ``p = max(p1, p2)``."""
    p = max(p1, p2)
    if T <= p + 1:
        raise ValueError("need T > max(p1, p2) + 1")
    return _fit_term(ssr, T) + math.log(T - p - 1) * (3 + p1 + p2)


@dataclass(frozen=True)
class OrderGrid:
    p1_max: int = 2
    p2_max: int = 2

    def __post_init__(self):
        if self.p1_max < 1 or self.p2_max < 0:
            raise ValueError("need p1_max >= 1 and p2_max >= 0")

    def orders(self) -> list[tuple[int, int]]:
        return [
            (p1, p2) for p1 in range(1, self.p1_max + 1) for p2 in range(0, self.p2_max + 1)
        ]


@dataclass
class SelectionResult:
    aic_choice: tuple[int, int] | None
    bic_choice: tuple[int, int] | None
    table: list[dict]


def argmin_order(values: dict[tuple[int, int], float], rtol: float = 1e-12):
    """Order with the smallest criterion; ties go to smaller ``p1 + p2``, then smaller ``p1``."""
    finite = {k: v for k, v in values.items() if not math.isnan(v)}
    if not finite:
        return None
    best = min(finite.values())
    if math.isinf(best):
        tied = [k for k, v in finite.items() if v == best]
    else:
        tied = [k for k, v in finite.items() if v <= best + rtol * max(1.0, abs(best))]
    return min(tied, key=lambda k: (k[0] + k[1], k[0]))


def select_order(
    D,
    grid: OrderGrid,
    spec: ModelSpec,
    config: FitConfig | None = None,
) -> SelectionResult:
    """OLS-fit every order in ``grid`` and pick the AIC and BIC minimizers.

    ``spec`` supplies ``d``, ``sigma`` and the offset; its order is ignored.
    Cells whose fit fails are reported with ``available=False`` and skipped.
    """
    config = config or FitConfig()
    D = np.asarray(D, dtype=float)
    T = D.size
    table = []
    aics, bics = {}, {}
    for p1, p2 in grid.orders():
        cell_spec = dataclasses.replace(spec, p1=p1, p2=p2)
        row = {"p1": p1, "p2": p2}
        try:
            theta, res = fit_theta(D, cell_spec, config)
        except (ConvergenceError, ValueError) as exc:
            warnings.warn(f"order ({p1}, {p2}) unavailable: {exc}", RuntimeWarning, stacklevel=2)
            row.update(available=False, ssr=math.nan, aic=math.nan, bic=math.nan)
            table.append(row)
            continue
        mu = fitted_means(D, theta, cell_spec)
        ssr = float(np.sum((D - mu) ** 2))
        row.update(available=True, ssr=ssr, aic=aic(ssr, T, p1, p2), bic=bic(ssr, T, p1, p2))
        row["theta"] = theta.as_vector().tolist()
        aics[(p1, p2)] = row["aic"]
        bics[(p1, p2)] = row["bic"]
        table.append(row)
    return SelectionResult(argmin_order(aics), argmin_order(bics), table)
