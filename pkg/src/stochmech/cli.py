"""``stochmech`` command line.

Exit codes: 0 when every verdict passes, 1 when any verdict fails or a
computation raises, 2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from ._version import __version__
from .errors import ConfigError
from .scenario_cli import apply_overrides, builtin_text, parse_config, run_scenario, scenario_catalog

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochmech", description="Run stochastic-mechanics scenarios.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or a built-in scenario")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("config", nargs="?", type=Path, help="scenario TOML file")
    src.add_argument("--builtin", metavar="NAME", help="name of a built-in scenario")
    run.add_argument("--out", type=Path, help="output directory (default: stochmech_runs/<name>)")
    run.add_argument("--seed", type=_u64, help="override the master seed")
    run.add_argument("--threads", type=_positive_int, help="worker threads for ensembles")
    run.add_argument("--emit-plots", action="store_true", help="also write a plotting script")
    run.add_argument("--quiet", action="store_true", help="print only the overall verdict")

    cat = sub.add_parser("catalog", help="list built-in scenarios")
    cat.add_argument("--show", metavar="NAME", help="print the TOML of one built-in scenario")
    return parser


def _provenance(exc: BaseException) -> str:
    """Innermost package module in the traceback of ``exc``."""
    where = "stochmech"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = Path(frame.filename).parts
        if "stochmech" in parts:
            where = "stochmech." + Path(frame.filename).stem
    return where


def _print_summary(summary, quiet: bool) -> None:
    status = "PASS" if summary.passed else "FAIL"
    if not quiet:
        for h in summary.headline:
            unc = h["uncertainty"]
            unc = "exact" if unc == "exact" else f"+/- {unc:.3g}" if unc is not None else "n/a"
            value = "n/a" if h["value"] is None else f"{h['value']:.6g}"
            tag = f"[{h['verdict']}]" if h["verdict"] else ""
            print(f"  {h['name']:<32} {value:>14} {unc:<14} {tag}")
        print(f"  outputs in {Path(summary.files['summary']).parent}")
    print(f"{summary.config.name}: {status} ({summary.wall_clock:.2f} s)")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        if args.show:
            try:
                print(builtin_text(args.show), end="")
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_USAGE
            return EXIT_PASS
        for name, desc in scenario_catalog():
            print(f"{name:<24} {desc}")
        return EXIT_PASS

    try:
        if args.builtin:
            config = parse_config(builtin_text(args.builtin), args.builtin)
        else:
            text = args.config.read_text(encoding="utf-8")
            config = parse_config(text, args.config.stem)
        config = apply_overrides(config, seed=args.seed, threads=args.threads,
                                 emit_plots=True if args.emit_plots else None)
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        summary = run_scenario(config, args.out)
    except Exception as exc:  # report and map to a failing exit status
        print(f"error in {_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _print_summary(summary, args.quiet)
    return EXIT_PASS if summary.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
