"""Batch command line: run experiments and write JSON reports.

Exit codes: 0 when every check passes, 1 when any check fails, 2 for
configuration errors (diagnostic on stderr).
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import ConfigParse
from .experiments import (
    GALLERY_CASES,
    ExperimentConfig,
    Report,
    load_config,
    run_experiment,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

# Subcommand -> experiment name; "run" takes the experiment from --config.
COMMANDS = {
    "space": "space",
    "angle": "angle",
    "decompose": "decompose",
    "eta-recover": "eta-recover",
    "gallery": "gallery",
    "suite": "suite",
}


def _read_json_arg(value: str, field: str) -> dict:
    """A JSON object given inline or as a path to a file."""
    if value.lstrip().startswith("{"):
        text = value
    else:
        try:
            text = Path(value).read_text()
        except OSError as e:
            raise ConfigParse(f"cannot read {value}: {e.strerror}", field=field) from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParse(e.msg, line=e.lineno, column=e.colno, field=field) from e
    if not isinstance(obj, dict):
        raise ConfigParse("expected a JSON object", field=field)
    return obj


def _common_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="experiment config JSON file")
    parent.add_argument("--out", "--report", dest="out", help="write the report here instead of stdout")
    parent.add_argument("--seed", type=int, help="override the config seed")
    parent.add_argument("--parallel", type=int, help="worker count for parallel probing / the suite pool")
    parent.add_argument("--space", help='space JSON (file or inline), e.g. {"uniform": 8}')
    parent.add_argument("--manifold", help='manifold JSON (file or inline), e.g. {"sphere": {"dim": 2}}')
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l2man", description="Experiments on manifold-valued L2 spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common], help="run the experiment named in --config")
    sub.add_parser("space", parents=[common], help="measure-space checks")
    angle = sub.add_parser("angle", parents=[common], help="angle convergence")
    angle.add_argument("--trace-csv", help="write the first pair's convergence trace as CSV")
    decompose = sub.add_parser("decompose", parents=[common], help="rigidity decomposition")
    decompose.add_argument("--case", choices=("r1", "hilbert"), help="decompose a gallery counterexample")
    decompose.add_argument("--m", type=int, help="grid size for --case")
    eta = sub.add_parser("eta-recover", parents=[common], help="density recovery for an affine map")
    eta.add_argument("--oracle", help="builtin:<name>, e.g. builtin:eta_projection")
    gallery = sub.add_parser("gallery", parents=[common], help="explicit isometries and counterexamples")
    gallery.add_argument("action", nargs="?", choices=("run",), default="run")
    gallery.add_argument("--case", choices=GALLERY_CASES)
    gallery.add_argument("--m", type=int, help="grid size")
    sub.add_parser("suite", parents=[common], help="the full acceptance battery")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Build the config from --config (if any), then apply flag overrides."""
    if args.config:
        cfg = load_config(args.config)
        if args.command != "run" and cfg.experiment != COMMANDS[args.command]:
            raise ConfigParse(
                f"config is for '{cfg.experiment}', not '{COMMANDS[args.command]}'", field="experiment"
            )
    elif args.command == "run":
        raise ConfigParse("'run' needs --config")
    else:
        cfg = ExperimentConfig(COMMANDS[args.command])

    params = dict(cfg.params)
    if getattr(args, "oracle", None):
        params["oracle"] = args.oracle
    if getattr(args, "case", None):
        params["case"] = args.case
    if getattr(args, "m", None) is not None:
        params["m"] = args.m
    cfg = replace(cfg, params=params)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigParse("seed must be a nonnegative integer", field="seed")
        cfg = replace(cfg, seed=args.seed)
    if args.parallel is not None:
        cfg = replace(cfg, parallel=max(1, args.parallel))
    if args.space:
        cfg = replace(cfg, space=_read_json_arg(args.space, "space"))
    if args.manifold:
        cfg = replace(cfg, manifold=_read_json_arg(args.manifold, "manifold"))
    if getattr(args, "trace_csv", None):
        cfg = replace(cfg, trace_csv=args.trace_csv)
    return cfg


def write_report(report: Report, out: str | None) -> None:
    text = report.dumps()
    if out:
        Path(out).write_text(text)
        logger.info(f"report written to {out}")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.getenv("L2MAN_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_experiment(cfg)
    except ConfigParse as e:
        print(f"l2man: config error: {e.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_report(report, args.out)
    except OSError as e:
        print(f"l2man: cannot write report: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if not report.passed:
        failed = report.failures()
        logger.warning(f"{len(failed)} check(s) failed: {', '.join(failed[:10])}")
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
