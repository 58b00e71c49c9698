"""``fedunlearn`` command line: run, bench, attack, select-sim."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, SimulationError, InputDomainError, ParseError
from .harness import MODES, load_config, run_mode


def build_parser():
    parser = argparse.ArgumentParser(prog="fedunlearn", description="Decremental federated learning simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--baseline", choices=["deal", "original", "newfl"], help="override the baseline")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, baseline=args.baseline, mode=args.command)
        result = run_mode(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 3
    except (InputDomainError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command == "bench":
        summary = {"rows": len(result)}
    elif args.command == "run":
        summary = {k: result[k] for k in ("rounds", "total_time_ms", "total_energy", "convergence_round")}
    else:
        summary = {"out": cfg.out}
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
