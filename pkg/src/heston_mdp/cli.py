"""Command-line entry point ``heston-mdp``.

Exit codes: 0 success, 1 usage or configuration error, 2 numeric or
experiment failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

from . import experiments as ex
from . import plotting
from .config import load_config
from .deviations import RateContext, appc_rate_I, appc_rate_J, rate_I_ab, write_rate_grid_csv
from .errors import ConfigError, DomainError, HestonMDPError
from .functionals import compute_functionals, ito_sums
from .mle import estimate_full, estimate_via_martingales
from .models import (
    SimGrid,
    read_path_binary,
    read_path_csv,
    simulate_euler_path,
    simulate_heston_path,
    write_path_binary,
    write_path_csv,
)

__all__ = ["cli_main", "main", "parse_grid", "DEFAULT_CGF_U"]

DEFAULT_CGF_U = ((1.0, 0.0, 0.0, 0.0), (0.0, 0.5, 0.0, 0.5))


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:step`` to an inclusive, evenly spaced axis."""
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like lo:hi:step, got {text!r}") from exc
    if not step > 0 or not hi >= lo:
        raise ConfigError(f"grid needs step > 0 and hi >= lo, got {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def _parse_vector(text: str, size: int, what: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{what}: {text!r} is not a list of numbers") from exc
    if len(vals) != size:
        raise ConfigError(f"{what}: expected {size} numbers, got {len(vals)}")
    return vals


_OVERRIDE_FLAGS = {
    "seed": "seed",
    "n_paths": "n_paths",
    "horizons": "horizons",
    "output_path": "output_path",
    "n_steps_per_unit_time": "n_steps_per_unit_time",
    "lambda_exponent": "lambda_exponent",
    "radii": "radii",
}


def _add_config_flags(sp):
    sp.add_argument("--config", help="flat key = value config file")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    sp.add_argument("--seed")
    sp.add_argument("--n-paths", dest="n_paths")
    sp.add_argument("--horizons", help="comma separated, e.g. 25,50,100")
    sp.add_argument("--out", "--output-path", dest="output_path", help="output directory")
    sp.add_argument("--n-steps-per-unit-time", dest="n_steps_per_unit_time")
    sp.add_argument("--lambda-exponent", dest="lambda_exponent")
    sp.add_argument("--radii")


def _config_from_args(args):
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for attr, key in _OVERRIDE_FLAGS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def _build_parser():
    parser = _Parser(prog="heston-mdp", description="Heston drift MLE: simulation and moderate-deviation checks")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    sp = sub.add_parser("simulate", help="simulate one path and write CSV, HSTP binary, JSON and PNG")
    _add_config_flags(sp)
    sp.add_argument("--scheme", choices=("exact", "euler"), default="exact")

    sp = sub.add_parser("estimate", help="drift MLE from a path file (.csv or .hstp)")
    sp.add_argument("--input", required=True)
    sp.add_argument("--truth", help="a,b,c,d; with retained noise also reports the oracle form")
    sp.add_argument("--rho", type=float, default=0.0, help="correlation used by the oracle form")
    sp.add_argument("--out", help="JSON destination (default: stdout)")

    sp = sub.add_parser("rates", help="rate function on a grid, as CSV plus a contour plot")
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--b", type=float, required=True)
    sp.add_argument("--grid", required=True, help="lo:hi:step for both axes")
    sp.add_argument("--grid-y", help="lo:hi:step for the second axis (default: --grid)")
    sp.add_argument("--kind", choices=("ab", "appc-I", "appc-J"), default="ab")
    sp.add_argument("--out", required=True, help="CSV destination")
    sp.add_argument("--no-plot", action="store_true")

    sp = sub.add_parser("cgf-check", help="normalised CGF of the martingale against its limit")
    _add_config_flags(sp)
    sp.add_argument("--u", action="append", help="4-vector, repeatable (default: 1,0,0,0 and 0,.5,0,.5)")
    sp.add_argument("--max-norm", type=float, default=1.0)

    sp = sub.add_parser("clt-check", help="covariance of sqrt(T)(theta_hat - theta)")
    _add_config_flags(sp)

    sp = sub.add_parser("ergodic-check", help="time averages against their ergodic limits")
    _add_config_flags(sp)
    sp.add_argument("--n-batches", type=int, default=20)

    sp = sub.add_parser("mdp-experiment", help="moderate-deviation tail probabilities")
    _add_config_flags(sp)
    sp.add_argument("--importance", choices=("auto", "tilt", "none"), default="auto")
    return parser


def _emit(result, out_dir=None):
    paths = result.write(out_dir)
    paths["png"] = plotting.plot_result(result, out_dir)
    for kind in ("json", "csv", "png"):
        print(f"wrote {paths[kind]}")
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return paths


def _cmd_simulate(args):
    cfg = _config_from_args(args)
    p = cfg.params
    T = cfg.horizons[-1]
    n_steps = int(round(T * cfg.n_steps_per_unit_time))
    grid = SimGrid(T, n_steps)
    if args.scheme == "exact":
        path = simulate_heston_path(p, grid, cfg.seed)
    else:
        path = simulate_euler_path(p, grid, cfg.seed)
    out = FsPath(cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    write_path_csv(path, out / "path.csv")
    write_path_binary(path, out / "path.hstp")
    f = compute_functionals(path)
    est = estimate_full(f)
    doc = {
        "schema_version": ex.SCHEMA_VERSION,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(include_output=False),
        "scheme": args.scheme,
        "functionals": f.to_record(),
        "estimate": est.to_record(),
        "min_x": f.metadata["min_x"],
    }
    (out / "path.json").write_text(json.dumps(ex._jsonable(doc), indent=2) + "\n")
    plotting.plot_path(path, out / "path.png")
    for name in ("path.csv", "path.hstp", "path.json", "path.png"):
        print(f"wrote {out / name}")
    return 0


def _read_any_path(src):
    src = FsPath(src)
    try:
        head = src.read_bytes()[:4]
    except OSError as exc:
        raise ConfigError(f"cannot read {src}: {exc}") from exc
    return read_path_binary(src) if head == b"HSTP" else read_path_csv(src)


def _cmd_estimate(args):
    path = _read_any_path(args.input)
    f = compute_functionals(path)
    est = estimate_full(f)
    doc = {
        "schema_version": ex.SCHEMA_VERSION,
        "input": str(args.input),
        "functionals": f.to_record(),
        "estimate": est.to_record(),
    }
    if args.truth:
        truth = _parse_vector(args.truth, 4, "--truth")
        if path.noise is None:
            raise ConfigError("--truth needs a path file with retained noise (.hstp)")
        doc["oracle_estimate"] = estimate_via_martingales(truth, f, ito_sums(path, args.rho)).to_record()
    text = json.dumps(ex._jsonable(doc), indent=2) + "\n"
    if args.out:
        FsPath(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_rates(args):
    try:
        ctx = RateContext(args.a, args.b)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    gx = parse_grid(args.grid)
    gy = parse_grid(args.grid_y) if args.grid_y else gx
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    if args.kind == "ab":
        values, names = rate_I_ab(ctx, xx, yy), ("alpha", "beta")
    elif args.kind == "appc-I":
        values, names = appc_rate_I(ctx, xx, yy), ("x", "y")
    else:
        values, names = appc_rate_J(ctx, xx, yy), ("z", "t")
    values = np.asarray(values, dtype=float)
    dest = FsPath(args.out)
    dest.parent.mkdir(parents=True, exist_ok=True)
    write_rate_grid_csv(dest, names, (xx, yy), values)
    print(f"wrote {dest}")
    if not args.no_plot and len(gx) > 1 and len(gy) > 1:
        png = plotting.plot_rate_grid(xx, yy, values, dest.with_suffix(".png"), labels=names, title=args.kind)
        print(f"wrote {png}")
    return 0


def _cmd_cgf(args):
    cfg = _config_from_args(args)
    us = [_parse_vector(u, 4, "--u") for u in args.u] if args.u else list(DEFAULT_CGF_U)
    result = ex.run_cgf_convergence(cfg, us, max_norm=args.max_norm)
    _emit(result)
    for entry in result.summary["per_u"]:
        print(f"u={np.asarray(entry['u']).tolist()} abs errors by horizon: {np.round(entry['abs_errors'], 4).tolist()}")
    return 0


def _cmd_clt(args):
    cfg = _config_from_args(args)
    result = ex.run_clt_check(cfg)
    _emit(result)
    for name, s in result.summary.items():
        print(
            f"{name}: max |diag rel err| = {s['max_abs_diag_relative_error']:.3f}, "
            f"max off-diag corr err = {s['max_offdiag_correlation_error']:.3f}"
        )
    return 0


def _cmd_ergodic(args):
    cfg = _config_from_args(args)
    result = ex.run_ergodic_check(cfg, n_batches=args.n_batches)
    _emit(result)
    rec = result.records[0]
    for name in result.summary["limits"]:
        print(f"{name} = {rec[name]:.4f} (limit {rec[name + '_limit']:.4f}, se {rec[name + '_se']:.4f})")
    print(f"|T<M>^-1 - Sigma^-1| = {rec['tm_inv_distance']:.4f}")
    return 0


def _cmd_mdp(args):
    cfg = _config_from_args(args)
    result = ex.run_mdp_tail(cfg, importance=args.importance)
    _emit(result)
    for entry in result.summary["per_radius"]:
        print(
            f"{entry['estimator']} r={entry['radius']:g}: log p / lambda = "
            f"{[None if v is None else round(v, 4) for v in entry['log_rates']]}, "
            f"-inf I = {-entry['inf_rate']:.4f}"
        )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "rates": _cmd_rates,
    "cgf-check": _cmd_cgf,
    "clt-check": _cmd_clt,
    "ergodic-check": _cmd_ergodic,
    "mdp-experiment": _cmd_mdp,
}


def _attach_negative_values(argv):
    # "--grid -2:2:0.1" would otherwise be read as an unknown flag
    out = []
    it = iter(argv)
    for tok in it:
        if tok in ("--grid", "--grid-y", "--u", "--truth", "--horizons", "--radii"):
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-"):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def cli_main(argv=None) -> int:
    parser = _build_parser()
    argv = _attach_negative_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (HestonMDPError, ArithmeticError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
