"""Command-line entry point: ``phflow <mode> ...`` and ``phflow reproduce``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .experiments import MODES, ConfigError, ExperimentConfig, format_report, load_config, reproduce_all, run
from .network import NetworkError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="phflow", description="Port-Hamiltonian network flow optimization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log optimizer progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run the {mode} experiment")
        p.add_argument("--instance", help="builtin name (fig1, ep1, ep2, ep3, diamond) or DIMACS path")
        p.add_argument("--config", help="key=value config file; command-line options take precedence")
        p.add_argument("--param", action="append", type=_key_value, default=[], metavar="KEY=VALUE")
        p.add_argument("--out", help="output directory")
    r = sub.add_parser("reproduce", help="run the canonical configurations and check them")
    r.add_argument("--quick", action="store_true", help="short runs with relaxed checks")
    r.add_argument("--out", default="reproduce-out", help="output directory (default: %(default)s)")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    params = dict(args.param)
    if args.config:
        overrides = {"mode": args.command, **params}
        if args.instance:
            overrides["instance"] = args.instance
        if args.out:
            overrides["out"] = args.out
        return load_config(args.config, overrides)
    if not args.instance:
        raise ConfigError("--instance is required (or give --config)")
    return ExperimentConfig(args.command, args.instance, args.out, params)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "reproduce":
            rows = reproduce_all(args.out, quick=args.quick)
            print(format_report(rows))
            return EXIT_OK if all(r.passed for r in rows) else EXIT_NUMERICAL
        result = run(_config_from_args(args))
        for k, v in result.summary.items():
            print(f"{k}={v}")
        return EXIT_OK
    except (ConfigError, NetworkError) as exc:
        print(f"phflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"phflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"phflow: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
