"""Command-line entry point: ``eitmemory run|validate|calibrate|version``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .. import __version__
from ..errors import ConfigError, ExportError, PhysicsError
from .config import dump_config, load_config, parse_override, resolve_calibration
from .params import SCHEMA, format_value, load_calibration

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PHYSICS = 2
EXIT_IO = 3

logger = logging.getLogger("eitmemory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eitmemory", description="Warm-vapour EIT memory simulations.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_opts(p):
        p.add_argument("config", help="scenario file")
        p.add_argument("--out", help="output directory (overrides scenario.output)")
        p.add_argument("--jobs", type=int, help="worker processes for sweep points")
        p.add_argument("--format", choices=("csv", "json"), help="table format")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="calibration override, e.g. atom.omega_c=12e6 (repeatable)")

    scenario_opts(sub.add_parser("run", help="run a scenario and write its outputs"))
    scenario_opts(sub.add_parser("validate", help="check a scenario file and print the resolved config"))
    cal = sub.add_parser("calibrate", help="show the calibration in use and its provenance")
    cal.add_argument("--file", help="calibration file (default: the packaged one)")
    cal.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    sub.add_parser("version", help="print the package version")
    return parser


def _scenario(args):
    config = load_config(args.config)
    overrides = [parse_override(o) for o in args.override]
    return config.with_options(output=args.out, jobs=args.jobs, format=args.format, overrides=overrides)


def _cmd_run(args) -> int:
    from .runner import run_scenario

    config = _scenario(args)
    manifest = run_scenario(config)
    print(json.dumps({"status": manifest.status, "outputs": manifest.outputs,
                      "duration_s": round(manifest.duration_s, 3), "summary": manifest.summary},
                     indent=2, sort_keys=True, default=str))
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = _scenario(args)
    cal = resolve_calibration(config)
    sys.stdout.write(dump_config(config))
    print(f"# calibration {cal.version} sha256 {cal.sha256}")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cal = load_calibration(args.file)
    cal = cal.with_overrides([parse_override(o) for o in args.override])
    cal.atom()
    print(f"# source {cal.source}")
    print(f"# sha256 {cal.sha256}")
    for section, keys in SCHEMA.items():
        print(f"[{section}]")
        for key, (_, _, doc) in keys.items():
            print(f"{key} = {format_value(cal.values[section][key])}    ; {doc}")
        print()
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "validate": _cmd_validate, "calibrate": _cmd_calibrate}
    try:
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except (ExportError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
