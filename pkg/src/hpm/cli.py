"""Command-line entry point: ``hpm <command> --config FILE [--out DIR] [--seed N] [--threads N]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import __version__, harness
from .config import load_config
from .errors import HPMError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hpm", description="Identify PDE parameters from two snapshots.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config (INI format)")
        p.add_argument("--out", help="output directory (overrides [experiment] output_dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides [experiment] seed)")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("generate", help="simulate and store the dataset"))
    common(sub.add_parser("identify", help="learn the parameters from one snapshot pair"))
    common(sub.add_parser("sweep-pairs", help="identify on every pair; quartile table per noise level"))
    common(sub.add_parser("sweep-dt", help="identify with widening gaps between the snapshots"))
    rep = common(sub.add_parser("report", help="rebuild tables and plot data from a results directory"),
                 needs_config=False)
    rep.add_argument("results", nargs="?", help="results directory (default: --out or the config's)")
    rep.add_argument("--config", help="config whose output_dir holds the results")
    return parser


def _print_table(table: harness.ResultTable) -> None:
    sys.stdout.write(table.csv())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        if args.command == "report":
            root = args.results or args.out
            if root is None and args.config:
                root = load_config(args.config).output_dir
            if root is None:
                print("error: report needs a results directory", file=sys.stderr)
                return 2
            for path in harness.cmd_report(root):
                print(path)
            return 0
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.command == "generate":
            print(harness.cmd_generate(cfg, args.out))
        elif args.command == "identify":
            rec = harness.cmd_identify(cfg, args.out, args.threads)
            print("correct:    ", harness.equation_string(cfg.family, harness.FAMILIES[cfg.family].true_lambda))
            print("identified: ", harness.equation_string(cfg.family, rec.lam))
        elif args.command == "sweep-pairs":
            _print_table(harness.cmd_sweep_pairs(cfg, args.out, args.threads))
        elif args.command == "sweep-dt":
            _print_table(harness.cmd_sweep_dt(cfg, args.out, args.threads))
    except HPMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
