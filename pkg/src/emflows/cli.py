"""Command-line front end.

Subcommands::

    emflows run <config>            run one experiment, write artifacts
    emflows compare <config>...     run several configs on a shared model
    emflows certify <config>        print certified constants

``--out DIR`` overrides the output directory, ``--seed N`` the config
seed, ``--no-svg`` suppresses plots.  Set ``EMFLOWS_LOG`` (e.g. INFO,
DEBUG) to control log verbosity.

Exit codes: 0 success, 2 an inequality check reported a violation,
1 any error (bad config, step-size violation, divergence).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .harness import cli_certify, cli_compare, cli_run


def _setup_logging() -> None:
    level = os.environ.get("EMFLOWS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emflows",
        description="EM-family iterations, functional-inequality checks and "
                    "convergence-bound comparisons on latent-variable models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory override")
    p_run.add_argument("--seed", type=int, default=None, help="seed override")
    p_run.add_argument("--no-svg", action="store_true", help="skip SVG output")

    p_cmp = sub.add_parser("compare", help="run several configs on one model")
    p_cmp.add_argument("configs", nargs="+")
    p_cmp.add_argument("--out", default=None, help="output directory override")
    p_cmp.add_argument("--seed", type=int, default=None, help="seed override")
    p_cmp.add_argument("--no-svg", action="store_true", help="skip SVG output")

    p_cert = sub.add_parser("certify", help="print certified constants")
    p_cert.add_argument("config")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cli_run(args.config, out=args.out, seed=args.seed,
                       no_svg=args.no_svg)
    if args.command == "compare":
        return cli_compare(args.configs, out=args.out, seed=args.seed,
                           no_svg=args.no_svg)
    if args.command == "certify":
        return cli_certify(args.config)
    return 1


if __name__ == "__main__":
    sys.exit(main())
