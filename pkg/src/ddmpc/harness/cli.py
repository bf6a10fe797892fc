"""Command-line entry point: ``ddmpc <experiment> --config FILE --seed N --out DIR``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PRESETS, load_config
from .experiments import EXPERIMENTS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddmpc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in EXPERIMENTS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or "").strip().splitlines()[0])
        p.add_argument("--config", default=None, help="YAML file merged over the preset")
        p.add_argument("--preset", default="default", choices=sorted(PRESETS))
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config, args.preset)
    seed = cfg.seed if args.seed is None else args.seed
    report = EXPERIMENTS[args.command](cfg, seed, args.out)
    print(report.summary())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
