"""Command-line interface.

Usage::

    gpsobol run CONFIG            # all stages, reusing current artifacts
    gpsobol design CONFIG         # then evaluate, fit, validate, analyze, report
    gpsobol builtin-eval SELECTOR INPUT OUTPUT

Builtin models are selected as ``builtin:ishigami?a=7&b=0.1``,
``builtin:gfunction?a=0,1,9`` or ``builtin:linear?w=1,2``.  ``builtin-eval``
exposes them through the external-model file protocol, which is handy for
testing model commands.

Exit codes: 0 success, 2 configuration or artifact error, 3 model evaluation
failure, 4 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import from_selector
from .config import load
from .errors import (ConfigError, GpsobolError, ModelEvaluationError, NumericalError,
                     ParseError, SchemaError)
from .pipeline import STAGES, StageError, run_pipeline, run_stage

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_MODEL, EXIT_NUMERICAL = 0, 1, 2, 3, 4

log = logging.getLogger("gpsobol")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (ConfigError, SchemaError, ParseError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, ModelEvaluationError):
        return EXIT_MODEL
    if isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERICAL
    return EXIT_OTHER


def _builtin_eval(args) -> int:
    fn = from_selector(args.selector)
    data = np.loadtxt(args.input, delimiter=",", skiprows=1, ndmin=2)
    values = fn.evaluate(data)
    with open(args.output, "w") as fh:
        fh.writelines(f"{v!r}\n" for v in np.atleast_1d(values).tolist())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpsobol",
        description="Sobol' sensitivity analysis with a Gaussian-process metamodel.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "run"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run"
                           else "run every stage in order")
        p.add_argument("config", type=Path, help="TOML configuration file")
        p.add_argument("-o", "--output-dir", type=Path, help="override [run] output_dir")
        p.add_argument("-j", "--workers", type=int, help="override [run] workers")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--force", action="store_true",
                       help="recompute even if current artifacts exist")
        p.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("builtin-eval", help="evaluate a builtin model on a CSV file")
    p.add_argument("selector")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    return parser


def _config(args):
    cfg = load(args.config)
    changes = {}
    if args.output_dir is not None:
        changes["output_dir"] = args.output_dir
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "builtin-eval":
            return _builtin_eval(args)
        cfg = _config(args)
        if args.command == "run":
            run_pipeline(cfg, force=args.force)
            print(f"report written to {Path(cfg.output_dir) / 'report.json'}")
        else:
            ran = run_stage(cfg, args.command, force=args.force)
            print(f"{args.command}: {'done' if ran else 'artifacts current, skipped'}")
    except (GpsobolError, StageError, OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
