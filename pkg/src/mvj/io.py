"""CSV ingestion and JSON/CSV serialization.

Series files have one header line and one observation per row.  With several
columns the value column is chosen by name (default ``value``), otherwise the
last column is used and any leading index column is ignored.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .counts import DispersionMoments
from .estimate import FitResult
from .process import ModelSpec, SimulatedPath, ThetaParams

FIT_FIELDS = (
    "order",
    "d",
    "sigma",
    "offset",
    "method",
    "theta",
    "vartheta",
    "sd_theta",
    "sd_vartheta",
    "ssr",
    "aic",
    "bic",
    "converged",
)


@dataclass(frozen=True)
class CountSeries:
    """Raw observations ``Y_t`` on ``{a, ..., a + d}``."""

    values: np.ndarray
    offset_a: int
    d: int

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise ValueError("series must be one-dimensional")
        D = v - self.offset_a
        bad = np.nonzero((D < 0) | (D > self.d))[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"row {i + 1}: value {v[i]} outside [{self.offset_a}, {self.offset_a + self.d}]"
            )
        object.__setattr__(self, "values", v.astype(np.int64))

    @property
    def D(self) -> np.ndarray:
        return self.values - self.offset_a

    def __len__(self):
        return self.values.size


def _pick_column(header: list[str], column: str | None) -> int:
    names = [h.strip() for h in header]
    if column is not None:
        if column in names:
            return names.index(column)
        if column.isdigit() and int(column) < len(names):
            return int(column)
        raise ValueError(f"column {column!r} not found; available: {names}")
    if "value" in names:
        return names.index("value")
    return len(names) - 1


def load_series(
    path,
    column: str | None = None,
    offset_a: int = 0,
    d: int | None = None,
    discretize: bool = False,
) -> CountSeries:
    """Read an integer series; ``discretize=True`` floors real values first.

    When ``d`` is omitted it is taken as ``max(Y) - offset_a``.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(cell.strip() for cell in r)]
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header line and at least one observation")
    col = _pick_column(rows[0], column)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            x = float(row[col])
        except (IndexError, ValueError):
            raise ValueError(f"{path}:{lineno}: non-numeric value {row!r}") from None
        if not math.isfinite(x):
            raise ValueError(f"{path}:{lineno}: non-finite value")
        if discretize:
            x = math.floor(x)
        elif x != math.floor(x):
            raise ValueError(f"{path}:{lineno}: non-integer value {x} (use discretization)")
        values.append(int(x))
    values = np.array(values, dtype=np.int64)
    if d is None:
        d = int(values.max() - offset_a)
    bad = np.nonzero((values < offset_a) | (values > offset_a + d))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"{path}:{i + 2}: value {values[i]} outside [{offset_a}, {offset_a + d}]"
        )
    return CountSeries(values, int(offset_a), int(d))


def write_series(path, values, extra: dict | None = None):
    """Write ``t,value[,extra...]`` rows; integers are written exactly."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", *extra])
        cols = list(extra.values())
        for t, v in enumerate(values):
            w.writerow([t + 1, int(v), *(repr(float(c[t])) for c in cols)])


def write_path(path, sim: SimulatedPath):
    write_series(path, sim.Y, {"mu": sim.mu, "r": sim.r})


def _floats(x):
    return None if x is None else [float(v) for v in np.ravel(x)]


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def fit_to_dict(res: FitResult) -> dict:
    spec = res.spec
    out = {
        "order": [spec.p1, spec.p2],
        "d": spec.d,
        "sigma": float(spec.sigma),
        "offset": spec.offset_a,
        "method": res.method,
        "theta": _floats(res.theta_hat.as_vector()),
        "vartheta": [res.vartheta_hat.vartheta1, res.vartheta_hat.vartheta2],
        "sd_theta": _floats(res.sd_theta),
        "sd_vartheta": _floats(res.sd_vartheta),
        "ssr": float(res.ssr),
        "aic": _finite_or_none(res.aic),
        "bic": _finite_or_none(res.bic),
        "converged": bool(res.converged),
        "T": res.T,
        "cov_theta": None if res.cov_theta is None else res.cov_theta.tolist(),
        "cov_vartheta": None if res.cov_vartheta is None else res.cov_vartheta.tolist(),
        "vartheta_raw": _floats(res.vartheta_raw),
        "sd_vartheta_bootstrap": _floats(res.sd_vartheta_bootstrap),
        "weight_floor_hits": res.weight_floor_hits,
        "warnings": list(res.warnings),
    }
    return out


@dataclass(frozen=True)
class FittedModel:
    """A fit as read back from JSON."""

    spec: ModelSpec
    method: str
    theta: ThetaParams
    vartheta: DispersionMoments
    record: dict


def fit_from_dict(rec: dict) -> FittedModel:
    missing = [k for k in FIT_FIELDS if k not in rec]
    if missing:
        raise ValueError(f"fit file lacks fields {missing}")
    p1, p2 = rec["order"]
    spec = ModelSpec(p1, p2, rec["d"], rec["sigma"], rec["offset"])
    theta = ThetaParams.from_vector(rec["theta"], p1, p2)
    return FittedModel(spec, rec["method"], theta, DispersionMoments(*rec["vartheta"]), rec)


def save_fit(path, res: FitResult):
    Path(path).write_text(json.dumps(fit_to_dict(res), indent=2) + "\n")


def load_fit(path) -> FittedModel:
    return fit_from_dict(json.loads(Path(path).read_text()))
