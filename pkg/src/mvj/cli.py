"""Command-line front end: ``mvj <command> [options]``.

Exit status is 0 on success, 1 for user errors (bad flags, malformed vectors,
unreadable or invalid input files) and 2 for internal failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings

import numpy as np

from .counts import variance_lower, variance_upper
from .diagnostics import diagnose, sample_acf, sample_pacf
from .estimate import ConvergenceError, FitConfig, fit
from .io import load_fit, load_series, save_fit, write_path
from .process import ModelSpec, RDistribution, ThetaParams, one_step_forecast, simulate_mvj
from .select import OrderGrid, select_order
from .study import StudyConfig, run_study

log = logging.getLogger("mvj")


class UserError(Exception):
    """Bad input from the command line or an input file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(message)


def parse_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected P1,P2, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers, got {text!r}") from None


def parse_vector(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed vector {text!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"non-finite entry in {text!r}")
    return vals


def parse_rdist(text: str) -> RDistribution:
    kind, _, rest = text.partition(":")
    try:
        params = [float(x) for x in rest.split(",")] if rest else []
        if kind == "beta" and len(params) == 2:
            return RDistribution.beta(*params)
        if kind == "constant" and len(params) == 1:
            return RDistribution.constant(params[0])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"expected beta:A,B or constant:R, got {text!r}")


def _add_model_flags(p, order_flag="--order"):
    if order_flag:
        p.add_argument(order_flag, type=parse_pair, required=True, metavar="P1,P2")
    p.add_argument("--d", type=int, required=True, help="upper bound of D_t")
    p.add_argument("--sigma", type=float, default=1.0, help="link adjustment (default 1)")
    p.add_argument("--offset", type=int, default=0, help="lower bound a of Y_t")


def _add_input_flags(p):
    p.add_argument("--in", dest="infile", required=True, metavar="FILE")
    p.add_argument("--column", default=None)
    p.add_argument("--discretize", action="store_true", help="floor real values first")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mvj", description="Bounded count time series (MVJ model).")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a path to CSV")
    _add_model_flags(p)
    p.add_argument("--theta", type=parse_vector, required=True, metavar="c,phi...,psi...")
    p.add_argument("--r", type=parse_rdist, default=RDistribution.beta(1, 1), metavar="beta:A,B")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("fit", help="estimate theta and vartheta")
    _add_model_flags(p)
    _add_input_flags(p)
    p.add_argument("--method", choices=("ols", "owls"), default="ols")
    p.add_argument("--bootstrap", type=int, default=0, metavar="B", help="block-bootstrap reps for vartheta SD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("select", help="AIC/BIC order selection")
    _add_model_flags(p, order_flag=None)
    _add_input_flags(p)
    p.add_argument("--max-order", type=parse_pair, default=(2, 2), metavar="P1,P2")

    p = sub.add_parser("forecast", help="one-step predictive mean and variance")
    p.add_argument("--fit", required=True)
    _add_input_flags(p)
    p.add_argument("--horizon", type=int, default=1)

    p = sub.add_parser("diagnose", help="Pearson residual diagnostics")
    p.add_argument("--fit", required=True)
    _add_input_flags(p)
    p.add_argument("--lags", type=int, default=20)

    p = sub.add_parser("acf", help="sample ACF/PACF as CSV")
    _add_input_flags(p)
    p.add_argument("--lags", type=int, default=20)
    p.add_argument("--pacf", action="store_true")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")

    p = sub.add_parser("study", help="Monte Carlo study")
    p.add_argument("--config", required=True)
    return parser


def _spec(args, order=None) -> ModelSpec:
    p1, p2 = order or args.order
    return ModelSpec(p1, p2, args.d, args.sigma, args.offset)


def _series(args, offset=0, d=None):
    return load_series(args.infile, args.column, offset, d, args.discretize)


def cmd_simulate(args, out):
    spec = _spec(args)
    theta = ThetaParams.from_vector(args.theta, *spec.order)
    if args.T < 1 or args.burn_in < 0:
        raise UserError("need --T >= 1 and --burn-in >= 0")
    path = simulate_mvj(theta, args.r, spec, args.T, args.burn_in, seed=args.seed)
    write_path(args.out, path)
    print(f"wrote {args.T} observations to {args.out}", file=out)


def cmd_fit(args, out):
    spec = _spec(args)
    series = _series(args, spec.offset_a, spec.d)
    config = FitConfig(method=args.method, bootstrap_reps=args.bootstrap, bootstrap_seed=args.seed)
    res = fit(series.D, spec, config)
    save_fit(args.out, res)
    theta = ", ".join(f"{x:.6g}" for x in res.theta_hat.as_vector())
    print(f"{res.method} theta = ({theta}); vartheta = "
          f"({res.vartheta_hat.vartheta1:.6g}, {res.vartheta_hat.vartheta2:.6g})", file=out)


def cmd_select(args, out):
    spec = _spec(args, order=(1, 0))
    series = _series(args, spec.offset_a, spec.d)
    sel = select_order(series.D, OrderGrid(*args.max_order), spec, FitConfig(covariances=False))
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["p1", "p2", "ssr", "aic", "bic"])
    for row in sel.table:
        w.writerow([row["p1"], row["p2"], repr(row["ssr"]), repr(row["aic"]), repr(row["bic"])])
    print(f"# aic_choice={_order(sel.aic_choice)} bic_choice={_order(sel.bic_choice)}", file=out)


def _order(o):
    return "none" if o is None else f"({o[0]},{o[1]})"


def cmd_forecast(args, out):
    if args.horizon != 1:
        raise UserError("only --horizon 1 is supported")
    model = load_fit(args.fit)
    series = _series(args, model.spec.offset_a, model.spec.d)
    mean, var = one_step_forecast(series.D, model.theta, model.vartheta, model.spec)
    d = model.spec.d
    result = {
        "horizon": 1,
        "mean": mean + model.spec.offset_a,
        "variance": var,
        "variance_lower": float(variance_lower(mean)),
        "variance_upper": float(variance_upper(mean, d)),
    }
    print(json.dumps(result), file=out)


def cmd_diagnose(args, out):
    model = load_fit(args.fit)
    series = _series(args, model.spec.offset_a, model.spec.d)
    rep = diagnose(series.D, model.theta, model.vartheta, model.spec, args.lags)
    print(json.dumps(rep.to_dict(), indent=2), file=out)


def cmd_acf(args, out):
    series = _series(args, 0, None)
    x = series.values.astype(float)
    T = x.size
    vals = sample_pacf(x, args.lags) if args.pacf else sample_acf(x, args.lags)
    band = 2.0 / math.sqrt(T)
    fh = open(args.out, "w", newline="") if args.out else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "pacf" if args.pacf else "acf", "lower", "upper"])
        for k, v in enumerate(vals, start=1):
            w.writerow([k, repr(float(v)), repr(-band), repr(band)])
    finally:
        if args.out:
            fh.close()


def cmd_study(args, out):
    try:
        cfg = StudyConfig.from_file(args.config)
    except (TypeError, json.JSONDecodeError) as exc:
        raise UserError(f"bad study config: {exc}") from None
    rep = run_study(cfg)
    print(f"{len(rep.records)} replications, {len(rep.failures)} failures -> {cfg.out_dir}", file=out)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "select": cmd_select,
    "forecast": cmd_forecast,
    "diagnose": cmd_diagnose,
    "acf": cmd_acf,
    "study": cmd_study,
}


def _glue_vectors(argv):
    # "--theta -0.2,0.5" would otherwise read the vector as a flag
    argv = list(sys.argv[1:] if argv is None else argv)
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--theta" and i + 1 < len(argv):
            out.append(f"--theta={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(_glue_vectors(argv))
    except UserError as exc:
        print(f"mvj: error: {exc}", file=err)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore")
        try:
            COMMANDS[args.command](args, out)
        except (UserError, ValueError, OSError, ConvergenceError, np.linalg.LinAlgError) as exc:
            print(f"mvj {args.command}: error: {exc}".replace("\n", " "), file=err)
            return 1
        except Exception as exc:  # noqa: BLE001
            print(f"mvj {args.command}: internal error: {type(exc).__name__}: {exc}".replace("\n", " "), file=err)
            return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
