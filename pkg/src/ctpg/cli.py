"""Command-line driver for the benchmark suite.

Subcommands: pareto | instability | train | eigs | gradcheck.
Exit codes: 0 success, 1 assertion/check failure, 2 config error.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctpg-bench",
        description="Gradient-estimator benchmarks for continuous-time "
                    "policy optimization")
    parser.add_argument("--version", action="version",
                        version=f"ctpg-bench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", required=True, help="key-value config file")
        if needs_out:
            p.add_argument("--out", required=True, help="output CSV path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
        p.add_argument("--threads", type=int, default=0,
                       help="0 = single-threaded deterministic mode (default)")

    common(sub.add_parser("pareto", help="gradient accuracy vs oracle-call "
                                         "cost sweep with dominance gate"))
    common(sub.add_parser("instability", help="reverse-reconstruction "
                                              "discrepancy during training"))
    p_train = sub.add_parser("train", help="policy optimization run(s)")
    common(p_train)
    p_train.add_argument("--out-params", default=None,
                         help="write final policy parameters here")
    common(sub.add_parser("eigs", help="reverse-process spectrum probes"))
    p_gc = sub.add_parser("gradcheck", help="oracle-agreement gate")
    p_gc.add_argument("--config", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    from . import bench
    try:
        if args.command == "pareto":
            return bench.cmd_pareto(args.config, args.out, args.seed, args.threads)
        if args.command == "instability":
            return bench.cmd_instability(args.config, args.out, args.seed,
                                         args.threads)
        if args.command == "train":
            return bench.cmd_train(args.config, args.out, args.out_params,
                                   args.seed, args.threads)
        if args.command == "eigs":
            return bench.cmd_eigs(args.config, args.out, args.seed, args.threads)
        if args.command == "gradcheck":
            return bench.cmd_gradcheck(args.config)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
