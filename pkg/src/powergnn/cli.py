"""Command-line entry point for the power-allocation experiments.

Subcommands cover the whole workflow: generate a topology, train a policy,
evaluate it against baselines on paired fading, test transference to larger
networks, run the numeric oracle suites, and score the baselines alone.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ConfigError,
    cmd_baseline,
    cmd_eval,
    cmd_gen_network,
    cmd_train,
    cmd_transfer,
    load_config,
    oracle_check,
)


def _add_common(sub, config_required=True):
    sub.add_argument("--config", required=config_required,
                     help="YAML experiment config")
    sub.add_argument("--seed", type=int, default=None,
                     help="override the master seed in the network section")
    sub.add_argument("--out", default=None,
                     help="override the output directory")
    sub.add_argument("--quiet", action="store_true",
                     help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powergnn",
        description="Binary power allocation with graph-filter policies",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-network", help="generate and save a topology")
    _add_common(p)

    p = subs.add_parser("train", help="train a policy per config")
    _add_common(p)

    p = subs.add_parser("eval", help="compare a checkpoint against baselines")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="trained policy file")
    p.add_argument("--network", default=None,
                   help="saved topology to evaluate on (default: regenerate "
                        "from the config's network section)")
    p.add_argument("--samples", type=int, default=None,
                   help="fading draws (default: output.eval_samples)")

    p = subs.add_parser("transfer",
                        help="evaluate a checkpoint on larger networks")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sizes", default="75,100",
                   help="comma-separated target sizes")
    p.add_argument("--networks-per-size", type=int, default=20)
    p.add_argument("--samples", type=int, default=100,
                   help="fading draws per network")

    p = subs.add_parser("oracle-check",
                        help="run numeric oracle suites on small instances")
    p.add_argument("--m", type=int, default=6, help="largest instance size")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-sign-flip", action="store_true",
                   help="negate computed gradients to prove the check can fail")
    p.add_argument("--quiet", action="store_true")

    p = subs.add_parser("baseline", help="score WMMSE/equal/random only")
    _add_common(p)
    p.add_argument("--network", default=None)
    p.add_argument("--samples", type=int, default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle-check":
            result = oracle_check(m=args.m, instances=args.instances,
                                  seed=args.seed,
                                  sign_flip=args.inject_sign_flip,
                                  quiet=args.quiet)
            return 1 if result["failures"] else 0

        config = load_config(args.config, seed_override=args.seed,
                             out_override=args.out)
        if args.command == "gen-network":
            cmd_gen_network(config, quiet=args.quiet)
        elif args.command == "train":
            cmd_train(config, quiet=args.quiet)
        elif args.command == "eval":
            cmd_eval(config, args.checkpoint, network_path=args.network,
                     samples=args.samples, quiet=args.quiet)
        elif args.command == "transfer":
            sizes = [int(s) for s in args.sizes.split(",") if s]
            cmd_transfer(config, args.checkpoint, sizes=sizes,
                         networks_per_size=args.networks_per_size,
                         samples=args.samples, quiet=args.quiet)
        elif args.command == "baseline":
            cmd_baseline(config, network_path=args.network,
                         samples=args.samples, quiet=args.quiet)
        return 0
    except ConfigError as exc:
        for line in exc.problems:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
