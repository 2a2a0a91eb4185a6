"""Command-line interface: run, scan, compare.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import parse_config
from .errors import ConfigError
from .runner import compare_runs, format_comparison, run_config, run_scan

__all__ = ["main"]


def _threads_from_env() -> int | None:
    raw = os.environ.get("NONADIAB_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"NONADIAB_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError("NONADIAB_THREADS must be >= 1")
    return value


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nonadiab",
        description="Trajectory-based non-adiabatic dynamics on 1D two-state models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one run description")
    run_p.add_argument("config", help="INI run description")
    scan_p = sub.add_parser("scan", help="channel probabilities over a k0 list")
    scan_p.add_argument("config", help="INI run description with a [scan] section")
    for p in (run_p, scan_p):
        p.add_argument("--threads", type=int, default=None, help="worker cap (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")

    cmp_p = sub.add_parser("compare", help="summarize differences between runs")
    cmp_p.add_argument("dirs", nargs="+", help="two or more run output directories")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _load(args.config)
            threads = args.threads if args.threads is not None else _threads_from_env()
            code, result = run_config(cfg, out_dir=args.out, seed=args.seed, threads=threads)
            out_dir = args.out or cfg.out_dir
            if code == 0:
                print(f"run complete: t = {result.final_time:g} a.u., outputs in {out_dir}")
            else:
                print(f"run aborted: {result.error} (outputs in {out_dir})", file=sys.stderr)
            return code
        if args.command == "scan":
            cfg = _load(args.config)
            if args.seed is not None:
                from dataclasses import replace

                cfg = replace(cfg, seed=args.seed)
            threads = args.threads if args.threads is not None else _threads_from_env()
            report = run_scan(cfg, threads=threads, out_dir=args.out)
            failed = [row for row in report["rows"] if row["error"]]
            print(f"scan complete: {len(report['rows'])} points, table in {report['csv']}")
            for row in failed:
                print(f"  k0 = {row['k0']:g} failed: {row['error']}", file=sys.stderr)
            return 0 if not failed else 3
        if args.command == "compare":
            print(format_comparison(compare_runs(args.dirs)))
            return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
