"""Command-line entry point: ``fdiabench {bench,ksweep,xai,lemma,ablate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_config
from .exceptions import ConfigError, FDIAError
from .harness import ABLATIONS, Runner, run_ablation, run_block_a, run_block_b, run_block_c, run_recovery_demo
from .report import emit_report

EXIT_OK, EXIT_CONFIG, EXIT_CELL_FAILURE = 0, 2, 3


def _seeds(text: str) -> tuple:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("--seeds needs at least one value")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdiabench", description="FDIA generator benchmark harness")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--case", help="case file path or bundled case name (ieee14, ieee30)")
    common.add_argument("--seeds", type=_seeds, help="comma-separated training seeds, e.g. 42,43,44")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--evasion-mode", choices=("isolated", "superposed"))
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bench", parents=[common], help="benchmark the pool and select the Pareto front")
    sub.add_parser("ksweep", parents=[common], help="attacker-knowledge sweep with Kruskal-Wallis tests")
    sub.add_parser("xai", parents=[common], help="cross-level attribution on Pareto-optimal cells")
    sub.add_parser("lemma", parents=[common], help="normalized-space projection failure and harmoniser recovery")
    ab = sub.add_parser("ablate", parents=[common], help="retrain with one ablation switch")
    ab.add_argument("--condition", choices=ABLATIONS, required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {k: v for k, v in {
            "case": args.case, "seeds": args.seeds, "out_dir": args.out, "evasion_mode": args.evasion_mode,
        }.items() if v is not None}
        cfg = cfg.replace(**overrides)
        runner = Runner(cfg)
    except (ConfigError, FDIAError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "bench":
        results = run_block_a(cfg, runner)
    elif args.command == "ksweep":
        results = run_block_b(cfg, runner)
    elif args.command == "xai":
        results = run_block_c(cfg, runner)
    elif args.command == "lemma":
        results = run_recovery_demo(cfg, runner)
    else:
        results = run_ablation(cfg, args.condition, runner)

    for path in emit_report(args.command, results, cfg.out_dir, args.format):
        print(path)
    if results.get("failures"):
        print(f"{len(results['failures'])} cell(s) failed; see the failures table", file=sys.stderr)
        return EXIT_CELL_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
