"""Monte Carlo harness for the two simulation settings.

Setting ``a`` holds nonnegative-dependence models, setting ``b`` models with
negative coefficients and a large intercept.  Every replication draws from
its own Philox stream keyed by ``(seed, setting, model, T, rep)``, so results
do not depend on execution order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import sample_acf
from .estimate import FitConfig, ols_fit, owls_fit
from .process import ModelSpec, RDistribution, ThetaParams, simulate_mvj
from .rng import stream
from .select import OrderGrid, select_order

log = logging.getLogger(__name__)

D_BOUND = 15

SETTINGS = {
    "a": {
        "M1": ((1, 0), (-0.2, 0.5)),
        "M2": ((1, 1), (-0.2, 0.4, 0.4)),
        "M3": ((1, 2), (-0.2, 0.4, 0.1, 0.4)),
        "M4": ((2, 0), (-0.2, 0.2, 0.5)),
        "M5": ((2, 1), (-0.2, 0.1, 0.4, 0.4)),
        "M6": ((2, 2), (-0.2, 0.1, 0.4, 0.1, 0.3)),
    },
    "b": {
        "M1": ((1, 0), (5.0, -0.5)),
        "M2": ((1, 1), (5.0, -0.4, -0.4)),
        "M3": ((1, 2), (5.0, -0.4, -0.1, -0.4)),
        "M4": ((2, 0), (5.0, -0.2, -0.5)),
        "M5": ((2, 1), (5.0, -0.1, -0.4, -0.4)),
        "M6": ((2, 2), (5.0, -0.1, -0.4, -0.1, -0.3)),
    },
}

GRID_ORDERS = [(1, 0), (1, 1), (1, 2), (2, 0), (2, 1), (2, 2)]


def model(setting: str, name: str, d: int = D_BOUND, sigma: float = 1.0):
    """``(ModelSpec, ThetaParams)`` for a named study model."""
    try:
        (p1, p2), vec = SETTINGS[setting][name]
    except KeyError:
        raise ValueError(f"unknown model {setting}/{name}") from None
    return ModelSpec(p1, p2, d, sigma), ThetaParams.from_vector(vec, p1, p2)


def param_names(spec: ModelSpec) -> list[str]:
    return (
        ["c"]
        + [f"phi{i}" for i in range(1, spec.p1 + 1)]
        + [f"psi{j}" for j in range(1, spec.p2 + 1)]
    )


def replication_stream(seed: int, setting: str, name: str, T: int, rep: int):
    return stream(seed, ord(setting), int(name[1:]), T, rep)


@dataclass
class StudyConfig:
    setting: str = "a"
    models: list = field(default_factory=lambda: ["M1"])
    T: list = field(default_factory=lambda: [200, 500])
    reps: int = 200
    seed: int = 20240101
    out_dir: str = "study_out"
    burn_in: int = 500
    alpha: float = 1.0
    beta: float = 1.0
    estimate: bool = True
    select: bool = True
    grid: tuple = (2, 2)
    acf_T: int = 500

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ValueError(f"setting must be one of {sorted(SETTINGS)}")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        for m in self.models:
            if m not in SETTINGS[self.setting]:
                raise ValueError(f"unknown model {m!r}")
        self.grid = tuple(self.grid)

    @classmethod
    def from_file(cls, path) -> "StudyConfig":
        return cls(**json.loads(Path(path).read_text()))


def replicate(
    setting: str,
    name: str,
    T: int,
    rep: int,
    seed: int,
    *,
    methods=("ols", "owls"),
    grid: OrderGrid | None = None,
    rdist: RDistribution | None = None,
    burn_in: int = 500,
    config: FitConfig | None = None,
) -> dict:
    """One replication: simulate, estimate with each method, optionally select the order."""
    spec, theta = model(setting, name)
    rdist = rdist or RDistribution.beta(1.0, 1.0)
    rng = replication_stream(seed, setting, name, T, rep)
    path = simulate_mvj(theta, rdist, spec, T, burn_in, rng=rng)
    out = {"setting": setting, "model": name, "T": T, "rep": rep}
    config = config or FitConfig()
    ols = None
    for method in methods:
        if method == "ols":
            ols = ols_fit(path.D, spec, config)
            res = ols
        else:
            res = owls_fit(path.D, spec, config, first_stage=ols)
        out[method] = {
            "theta": res.theta_hat.as_vector().tolist(),
            "vartheta": [res.vartheta_hat.vartheta1, res.vartheta_hat.vartheta2],
            "sd_theta": None if res.sd_theta is None else res.sd_theta.tolist(),
            "converged": res.converged,
        }
    if grid is not None:
        sel = select_order(path.D, grid, spec, FitConfig(covariances=False))
        out["aic_order"] = sel.aic_choice
        out["bic_order"] = sel.bic_choice
    return out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


@dataclass
class StudyReport:
    config: StudyConfig
    records: list
    failures: list
    acf: dict


def run_study(cfg: StudyConfig, write: bool = True) -> StudyReport:
    """Run every (model, T, replication) cell and write the report files.

    Individual replication failures are logged and counted; they never abort
    the study.  Output is a pure function of the config.
    """
    rdist = RDistribution.beta(cfg.alpha, cfg.beta)
    grid = OrderGrid(*cfg.grid) if cfg.select else None
    methods = ("ols", "owls") if cfg.estimate else ()
    records, failures = [], []
    acf = {}
    for name in cfg.models:
        spec, theta = model(cfg.setting, name)
        path = simulate_mvj(
            theta, rdist, spec, cfg.acf_T, cfg.burn_in,
            rng=replication_stream(cfg.seed, cfg.setting, name, cfg.acf_T, -1 % 2**31),
        )
        acf[name] = sample_acf(path.D, 2).tolist()
        for T in cfg.T:
            for rep in range(cfg.reps):
                try:
                    rec = replicate(
                        cfg.setting, name, T, rep, cfg.seed,
                        methods=methods, grid=grid, rdist=rdist, burn_in=cfg.burn_in,
                    )
                except Exception as exc:  # noqa: BLE001 - any failure is counted
                    log.warning("replication %s/%s T=%d rep=%d failed: %s", cfg.setting, name, T, rep, exc)
                    failures.append({"model": name, "T": T, "rep": rep, "error": str(exc)})
                    continue
                records.append(rec)
    report = StudyReport(cfg, records, failures, acf)
    if write:
        write_report(report)
    return report


def aggregate_estimates(records: list, setting: str) -> list[dict]:
    """Replication means and RMSEs per (model, T, method, parameter)."""
    rows = []
    keys = sorted({(r["model"], r["T"]) for r in records}, key=lambda k: (k[0], k[1]))
    for name, T in keys:
        spec, theta = model(setting, name)
        truth = theta.as_vector()
        cell = [r for r in records if r["model"] == name and r["T"] == T]
        for method in ("ols", "owls"):
            fits = [r[method] for r in cell if method in r]
            if not fits:
                continue
            est = np.array([f["theta"] for f in fits])
            names = param_names(spec)
            for i, pname in enumerate(names):
                rows.append(_agg_row(name, T, method, pname, truth[i], est[:, i]))
            if method == "ols":
                vt = np.array([f["vartheta"] for f in fits])
                for i, (pname, tv) in enumerate((("vartheta1", 0.5), ("vartheta2", 1 / 3))):
                    rows.append(_agg_row(name, T, method, pname, tv, vt[:, i]))
    return rows


def _agg_row(name, T, method, pname, true, values):
    return {
        "model": name,
        "T": T,
        "method": method,
        "param": pname,
        "true": float(true),
        "mean": float(np.mean(values)),
        "rmse": float(np.sqrt(np.mean((values - true) ** 2))),
        "n": int(values.size),
    }


def aggregate_selection(records: list) -> list[dict]:
    """Selection counts per (model, T, criterion) over the candidate orders."""
    rows = []
    keys = sorted({(r["model"], r["T"]) for r in records if "bic_order" in r})
    for name, T in keys:
        cell = [r for r in records if r["model"] == name and r["T"] == T]
        for crit in ("aic", "bic"):
            row = {"model": name, "T": T, "criterion": crit.upper()}
            for o in GRID_ORDERS:
                row[f"({o[0]},{o[1]})"] = sum(
                    1 for r in cell if r.get(f"{crit}_order") and tuple(r[f"{crit}_order"]) == o
                )
            rows.append(row)
    return rows


def _write_csv(path: Path, rows: list[dict]):
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def _flatten(rec: dict) -> list[dict]:
    rows = []
    for method in ("ols", "owls"):
        if method not in rec:
            continue
        row = {k: rec[k] for k in ("model", "T", "rep")}
        row["method"] = method
        row["theta"] = " ".join(_fmt(x) for x in rec[method]["theta"])
        row["vartheta"] = " ".join(_fmt(x) for x in rec[method]["vartheta"])
        row["converged"] = rec[method]["converged"]
        row["aic_order"] = _order_str(rec.get("aic_order"))
        row["bic_order"] = _order_str(rec.get("bic_order"))
        rows.append(row)
    if not rows:
        rows.append(
            {
                "model": rec["model"], "T": rec["T"], "rep": rec["rep"], "method": "",
                "theta": "", "vartheta": "", "converged": "",
                "aic_order": _order_str(rec.get("aic_order")),
                "bic_order": _order_str(rec.get("bic_order")),
            }
        )
    return rows


def _order_str(o):
    return "" if o is None else f"({o[0]},{o[1]})"


def write_report(report: StudyReport):
    out = Path(report.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reps = [row for rec in report.records for row in _flatten(rec)]
    _write_csv(out / "replications.csv", reps)
    _write_csv(out / "estimates.csv", aggregate_estimates(report.records, report.config.setting))
    _write_csv(out / "selection.csv", aggregate_selection(report.records))
    _write_csv(
        out / "acf.csv",
        [{"model": m, "rho1": v[0], "rho2": v[1]} for m, v in report.acf.items()],
    )
    summary = {
        "config": asdict(report.config),
        "n_records": len(report.records),
        "n_failures": len(report.failures),
        "failures": report.failures,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
