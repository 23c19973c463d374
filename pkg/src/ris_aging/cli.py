"""Command-line entry point ``ris-aging-de``.

Exit codes: 0 success, 2 usage / configuration / I/O error, 3 solver failure
(a diagnostic JSON is written to the output directory when possible).
"""

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace

import numpy as np

from .errors import ConditioningError, ConvergenceError, RisAgingError, SchemaError, ValidationError
from .experiments import BASELINES, EXPERIMENTS, ExperimentSpec, run_experiment
from .scenario import SystemConfig, config_from_dict

EXIT_OK, EXIT_IO, EXIT_SOLVER = 0, 2, 3
_SIZE_KEYS = ("M", "K", "L", "tau_c")


def _float_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _name_list(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser():
    ap = argparse.ArgumentParser(prog="ris-aging-de",
                                 description="Sum-SE experiments for RIS-assisted massive MIMO "
                                             "with channel aging.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment and write CSV + JSON sidecar")
    run.add_argument("experiment", choices=EXPERIMENTS)
    run.add_argument("--config", help="JSON configuration (absent keys take defaults)")
    run.add_argument("--seed", type=int, help="u64 seed (default: the config's seed)")
    run.add_argument("--trials", type=int, default=500, help="Monte Carlo trials (0 disables MC)")
    run.add_argument("--out", default="results")
    run.add_argument("--paper-scale", action="store_true",
                     help="keep the full-size defaults (M=L=100, K=20, tau_c=200)")
    run.add_argument("--doppler-convention", choices=("per-symbol", "per-index"))
    run.add_argument("--sweep", type=_float_list, help="comma-separated sweep values")
    run.add_argument("--baselines", type=_name_list, default=(),
                     help="comma-separated subset of " + ",".join(BASELINES))
    run.add_argument("--velocities", type=_float_list,
                     help="velocities [km/h] for nmse-vs-snr (default 0,50,135)")
    sub.add_parser("list", help="list experiments and baselines")
    return ap


def resolve_config(path, seed, paper_scale=False, convention=None):
    """Configuration file + command-line overrides.

    Without --paper-scale the desk-scale sizes apply unless the file sets any
    of M, K, L, tau_c itself.
    """
    data = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON in {path}: {exc}") from exc
    cfg = config_from_dict(data) if data else SystemConfig()
    if not paper_scale and not any(k in data for k in _SIZE_KEYS):
        cfg = cfg.desk_scale()
    overrides = {} if seed is None else {"seed": int(seed)}
    if convention:
        overrides["doppler_convention"] = convention
    return replace(cfg, **overrides)


def _diagnostic(out, spec_name, exc):
    info = {"experiment": spec_name, "error": type(exc).__name__, "message": str(exc),
            "residual": getattr(exc, "residual", None),
            "iterations": getattr(exc, "iterations", None),
            "traceback": traceback.format_exc()}
    text = json.dumps(info, indent=2, default=str)
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{spec_name}.error.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError:
        pass
    print(text, file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("experiments:", ", ".join(EXPERIMENTS))
        print("baselines:", ", ".join(BASELINES))
        return EXIT_OK
    try:
        cfg = resolve_config(args.config, args.seed, args.paper_scale, args.doppler_convention)
        kw = {}
        if args.velocities:
            kw["velocities"] = args.velocities
        spec = ExperimentSpec(name=args.experiment, sweep=args.sweep, baselines=args.baselines,
                              trials=args.trials, seed=cfg.seed, out=args.out, **kw)
    except (SchemaError, ValidationError, RisAgingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        record = run_experiment(spec, cfg)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConvergenceError, ConditioningError, RisAgingError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        _diagnostic(args.out, spec.name, exc)
        return EXIT_SOLVER
    print(f"wrote {record.csv_path} ({len(record.rows)} rows, {record.wall_clock_s:.1f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
