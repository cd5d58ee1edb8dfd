"""Command-line interface: ``asian-asym <subcommand> [flags]``.

Every subcommand writes machine-readable output (JSON or CSV) with floats at
full round-trip precision, together with a run manifest. Exit codes: 0 on
success, 2 on validation or usage errors, 3 on insufficient Monte Carlo
sampling, 4 when the rate-function optimizer does not converge.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .asymptotics import atm_bounds, averaged_forward, itm_expansion, parity_gap
from .calibration import Calibrator, SeriesError, fit_C, load_series
from .model import (
    Moneyness,
    ModelParams,
    OptionKind,
    OptionSpec,
    ValidationError,
    classify,
)
from .montecarlo import THREADS_ENV, McConfig, price_asian
from .ratefunction import (
    EXTRAPOLATIONS,
    InsufficientSamplingError,
    OptimizerConfig,
    empirical_rate,
    rate_function,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SAMPLING = 3
EXIT_NONCONVERGENCE = 4

DEFAULT_PARAMS = {
    "r": 0.0,
    "q": 0.0,
    "sigma": 0.2,
    "rho": 0.0,
    "lambda": 1.0,
    "s0": 100.0,
    "subordinator": {"family": "degenerate", "c": 0.0, "a": 1.0, "b": 0.0},
}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunManifest:
    subcommand: str
    params: dict[str, Any]
    seed: int | None = None
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _timestamp())
    result: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "params": self.params,
            "seed": self.seed,
            "version": self.version,
            "timestamp": self.timestamp,
            "result": self.result,
        }


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp for reproducible builds and tests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (
        dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
        if epoch
        else dt.datetime.now(dt.timezone.utc)
    )
    return now.isoformat(timespec="seconds")


# ---------------------------------------------------------------- helpers


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _cell(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_with_manifest(text: str, out: str | None, manifest: RunManifest) -> None:
    """Write CSV output; the manifest goes next to the file, or to stderr."""
    _emit(text, out)
    mtext = _json_text(manifest.to_dict())
    if out:
        Path(str(out) + ".manifest.json").write_text(mtext)
    else:
        sys.stderr.write(mtext)


def _load_params(args: argparse.Namespace) -> ModelParams:
    d = json.loads(json.dumps(DEFAULT_PARAMS))
    if args.params:
        try:
            loaded = json.loads(Path(args.params).read_text())
        except FileNotFoundError:
            raise ValidationError(f"params file not found: {args.params}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"params file is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ValidationError("params file must hold a JSON object")
        if "lam" in loaded and "lambda" not in loaded:
            loaded["lambda"] = loaded.pop("lam")
        sub = loaded.pop("subordinator", None)
        d.update(loaded)
        if sub:
            d["subordinator"].update(sub)
    for key in ("r", "q", "sigma", "rho", "s0"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    if getattr(args, "lam", None) is not None:
        d["lambda"] = args.lam
    for key in ("family", "c", "a", "b"):
        val = getattr(args, key, None)
        if val is not None:
            d["subordinator"][key] = val
    params = ModelParams.from_dict(d)
    return params.check()


def _mc_config(args: argparse.Namespace, **extra) -> McConfig:
    return McConfig(
        n_paths=args.paths,
        n_steps=args.steps,
        seed=args.seed,
        antithetic=args.antithetic,
        average=args.average,
        control_variate=getattr(args, "control_variate", False),
        threads=args.threads,
        **extra,
    ).check()


def _mc_dict(cfg: McConfig) -> dict[str, Any]:
    # the worker count never changes results, so it stays out of the manifest
    return {
        "paths": cfg.n_paths,
        "steps": cfg.n_steps,
        "antithetic": cfg.antithetic,
        "average": cfg.average,
        "control_variate": cfg.control_variate,
        "block_size": cfg.block_size,
    }


# ---------------------------------------------------------------- commands


def cmd_price(args: argparse.Namespace) -> int:
    params = _load_params(args)
    option = OptionSpec(args.strike, args.maturity, OptionKind.parse(args.kind)).check()
    cfg = _mc_config(args)
    est = price_asian(params, option, cfg)
    cls = classify(option, params.s0)
    manifest = RunManifest(
        "price",
        {"model": params.to_dict(), "strike": option.strike, "maturity": option.maturity,
         "kind": option.kind.value, **_mc_dict(cfg)},
        seed=cfg.seed,
    )
    out = {"manifest": manifest.to_dict(), **est.to_dict(), "class": cls.value, "kind": option.kind.value}
    _emit(_json_text(out), args.out)
    return EXIT_OK


def cmd_asym(args: argparse.Namespace) -> int:
    params = _load_params(args)
    K = args.strike if args.strike is not None else params.s0
    if not K > 0.0:
        raise ValidationError("strike must be positive")
    grid = args.t_grid
    if any(not (math.isfinite(T) and T > 0.0) for T in grid):
        raise ValidationError(f"t-grid entries must be positive, got {grid}")
    call_cls = classify(OptionSpec(K, grid[0], OptionKind.CALL), params.s0)
    rows, notes = [], set()
    for T in grid:
        A = averaged_forward(params, T)
        itm_call = itm_put = atm_lo = atm_hi = None
        try:
            if call_cls is Moneyness.ITM:
                itm_call = itm_expansion(params, K, T, OptionKind.CALL).price
            elif call_cls is Moneyness.OTM:
                itm_put = itm_expansion(params, K, T, OptionKind.PUT).price
        except ZeroDivisionError as exc:
            notes.add(str(exc))
        if call_cls is Moneyness.ATM:
            b = atm_bounds(params, T, args.sigma_bar_prime)
            atm_lo, atm_hi = b.lower, b.upper
            notes.update(b.warnings)
        rows.append((T, A, itm_call, itm_put, atm_lo, atm_hi, parity_gap(params, K, T)))
    manifest = RunManifest(
        "asym",
        {"model": params.to_dict(), "strike": K, "t_grid": grid,
         "sigma_bar_prime": args.sigma_bar_prime},
        result={"moneyness_call": call_cls.value, "warnings": sorted(notes)},
    )
    header = ("T", "A", "itm_call", "itm_put", "atm_lower", "atm_upper", "parity_gap")
    _emit_with_manifest(_csv_text(header, rows), args.out, manifest)
    return EXIT_OK


def cmd_rate(args: argparse.Namespace) -> int:
    params = _load_params(args)
    opt = OptimizerConfig(
        n_knots=args.knots,
        rel_tol=args.rel_tol,
        max_outer=args.max_outer,
        max_knots=args.max_knots,
        include_jumps=args.include_jumps,
    ).check()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = rate_function(params, args.strike, opt=opt)
        alternate = None
        if params.subordinator.has_jumps and params.rho != 0.0:
            # the leading-order role of jumps is unsettled, so report the other setting too
            alt = rate_function(params, args.strike, opt=replace(opt, include_jumps=not opt.include_jumps))
            alternate = {"include_jumps": alt.include_jumps, "value": alt.value, "converged": alt.converged}
    manifest = RunManifest(
        "rate",
        {"model": params.to_dict(), "strike": args.strike, "knots": args.knots,
         "rel_tol": args.rel_tol, "max_outer": args.max_outer, "max_knots": args.max_knots,
         "include_jumps": args.include_jumps, "drift_included": False},
        result={"warnings": sorted({str(w.message) for w in caught}), "alternate": alternate},
    )
    _emit(_json_text({"manifest": manifest.to_dict(), **res.to_dict()}), args.out)
    if args.path_out:
        Path(args.path_out).write_text(_csv_text(("t", "phi"), [tuple(map(float, p)) for p in res.path]))
    if not res.converged:
        raise CliError(f"rate-function optimizer did not converge (residual {res.residual:.3g})",
                       EXIT_NONCONVERGENCE)
    return EXIT_OK


def cmd_ldp(args: argparse.Namespace) -> int:
    params = _load_params(args)
    cfg = _mc_config(args)
    grid = sorted(args.t_grid, reverse=True)
    upper = {"upper": True, "lower": False, "auto": None}[args.tail]
    emp = empirical_rate(params, args.strike, cfg, grid, quantity=args.quantity,
                         tilt=not args.no_tilt, upper=upper, extrapolation=args.extrapolation)
    manifest = RunManifest(
        "ldp",
        {"model": params.to_dict(), "strike": args.strike, "t_grid": grid, "quantity": args.quantity,
         "tail": args.tail, "tilt": not args.no_tilt,
         "extrapolation": args.extrapolation, **_mc_dict(cfg)},
        seed=cfg.seed,
        result={"extrapolated": emp.extrapolated, "monotone_ok": emp.monotone_ok,
                "excluded": emp.excluded},
    )
    rows = [(float(T), float(y), float(s)) for T, y, s in zip(emp.T, emp.minus_T_logP, emp.stderr)]
    _emit_with_manifest(_csv_text(("T", "minus_T_logP", "stderr"), rows), args.out, manifest)
    return EXIT_OK


def _calib_inputs(args: argparse.Namespace):
    return load_series(args.series), args.r, args.q, args.sigma


def cmd_calibrate(args: argparse.Namespace) -> int:
    series, r, q, sigma = _calib_inputs(args)
    res = fit_C(series, r, q, sigma, args.horizon, (args.c_min, args.c_max), args.n_grid, rule=args.rule)
    manifest = RunManifest(
        "calibrate",
        {"series": str(args.series), "r": r, "q": q, "sigma": sigma, "horizon_days": args.horizon,
         "c_range": [args.c_min, args.c_max], "n_grid": args.n_grid, "rule": args.rule},
    )
    _emit(_json_text({"manifest": manifest.to_dict(), **res.to_dict()}), args.out)
    if args.scan_out:
        Path(args.scan_out).write_text(_csv_text(("C", "rmse"), [tuple(map(float, g)) for g in res.grid]))
    return EXIT_OK


def cmd_figures(args: argparse.Namespace) -> int:
    series, r, q, sigma = _calib_inputs(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {}
    for h in args.horizons:
        res = fit_C(series, r, q, sigma, h, (args.c_min, args.c_max), args.n_grid, rule=args.rule)
        cal = Calibrator(series, r, q, sigma, h, args.rule)
        dates = [str(d) for d in series.dates[cal.starts]]
        curves = {
            f"curve_observed_{h}d.csv": cal.observed,
            f"curve_c0_{h}d.csv": cal.predicted(0.0),
            f"curve_fit_{h}d.csv": cal.predicted(res.c_star),
        }
        for name, vals in curves.items():
            (out_dir / name).write_text(
                _csv_text(("date", "integrated_value"), list(zip(dates, map(float, vals))))
            )
        (out_dir / f"scan_{h}d.csv").write_text(
            _csv_text(("C", "rmse"), [tuple(map(float, g)) for g in res.grid])
        )
        summary[f"{h}d"] = {"c_star": res.c_star, "rmse_fit": res.rmse, "rmse_c0": cal.rmse(0.0),
                            "n_windows": res.n_windows}
    manifest = RunManifest(
        "figures",
        {"series": str(args.series), "r": r, "q": q, "sigma": sigma, "horizons": args.horizons,
         "c_range": [args.c_min, args.c_max], "n_grid": args.n_grid, "rule": args.rule},
        result=summary,
    )
    (out_dir / "manifest.json").write_text(_json_text(manifest.to_dict()))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--params", help="JSON file with model parameters; flags override it")
    g.add_argument("--r", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--s0", type=float)
    g.add_argument("--family", choices=("cpe", "gamma", "degenerate"))
    g.add_argument("--c", type=float, help="subordinator jump intensity")
    g.add_argument("--a", type=float, help="subordinator jump rate")
    g.add_argument("--b", type=float, help="subordinator drift")


def _add_mc_flags(p: argparse.ArgumentParser, paths: int) -> None:
    g = p.add_argument_group("monte carlo")
    g.add_argument("--paths", type=int, default=paths)
    g.add_argument("--steps", type=int, default=None, help="time steps (default max(16, ceil(252 T)))")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--antithetic", action="store_true")
    g.add_argument("--average", choices=("trapezoid", "left"), default="trapezoid")


def _add_calib_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--series", required=True, help="CSV with header date,close")
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--c-min", type=float, default=-0.5)
    p.add_argument("--c-max", type=float, default=1.0)
    p.add_argument("--n-grid", type=int, default=151)
    p.add_argument("--rule", choices=("continuous", "trapezoid"), default="continuous",
                   help="model integral: exact expectation or its daily trapezoid")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asian-asym",
        description="Short-maturity asymptotics, Monte Carlo and calibration for Asian options "
        "under a jump-diffusion driven by a Levy subordinator.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads for Monte Carlo (fallback: ${THREADS_ENV})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="Monte Carlo price of an Asian call or put")
    _add_model_flags(p)
    _add_mc_flags(p, 100_000)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--kind", choices=("call", "put"), default="call")
    p.add_argument("--control-variate", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("asym", help="closed-form short-maturity table over a T grid")
    _add_model_flags(p)
    p.add_argument("--strike", type=float, default=None, help="defaults to S0")
    p.add_argument("--t-grid", type=_float_list, required=True)
    p.add_argument("--sigma-bar-prime", type=float, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_asym)

    p = sub.add_parser("rate", help="out-of-the-money rate function by path optimization")
    _add_model_flags(p)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--knots", type=int, default=16)
    p.add_argument("--rel-tol", type=float, default=1e-3)
    p.add_argument("--max-outer", type=int, default=40)
    p.add_argument("--max-knots", type=int, default=512)
    p.add_argument("--include-jumps", action="store_true")
    p.add_argument("--out")
    p.add_argument("--path-out", help="CSV file for the optimal path (t, phi)")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("ldp", help="empirical -T log P over a maturity grid")
    _add_model_flags(p)
    _add_mc_flags(p, 200_000)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--t-grid", type=_float_list, default=[0.2, 0.1, 0.05])
    p.add_argument("--quantity", choices=("probability", "price"), default="probability")
    p.add_argument("--tail", choices=("auto", "upper", "lower"), default="auto",
                   help="event average >= K (upper) or <= K (lower); auto picks by moneyness")
    p.add_argument("--no-tilt", action="store_true")
    p.add_argument("--extrapolation", choices=EXTRAPOLATIONS, default="tlogt",
                   help="T -> 0 fit: I + a T log T + b T (tlogt) or I + b T (linear)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ldp)

    p = sub.add_parser("calibrate", help="fit the jump constant C to a price series")
    _add_calib_flags(p)
    p.add_argument("--horizon", type=int, default=30, help="window length in trading days")
    p.add_argument("--out")
    p.add_argument("--scan-out", help="CSV file for the (C, rmse) scan")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("figures", help="CSV data for integrated-value comparison plots")
    _add_calib_flags(p)
    p.add_argument("--horizons", type=_int_list, default=[7, 14, 30])
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValidationError, SeriesError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InsufficientSamplingError as exc:
        print(f"error: insufficient sampling: {exc}", file=sys.stderr)
        return EXIT_SAMPLING


if __name__ == "__main__":
    sys.exit(main())
