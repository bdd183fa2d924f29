#!/usr/bin/python3

import logging
import sys
from typing import List, Optional

import ptshell
from ptshell import cli, log
from ptshell.exceptions import (
    PtshellDesignError,
    PtshellError,
    PtshellInfeasibleError,
    PtshellValueError,
)

logger = logging.getLogger(__name__)


def main() -> None:
    try:
        sys.exit(run())
    except PtshellInfeasibleError as e:
        logger.fatal(f"{type(e).__name__}: {e}")
        sys.exit(cli.EXIT_INFEASIBLE)
    except PtshellDesignError as e:
        logger.fatal(f"{type(e).__name__}: {e}")
        sys.exit(cli.EXIT_NO_CONVERGENCE)
    except PtshellError as e:
        logger.fatal(f"{type(e).__name__}: {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        print("Ctrl-c pressed ...")
        sys.exit(1)


def run(argv: Optional[List[str]] = None) -> int:
    parser = cli.build_parser(
        prog="ptshell",
        description="Polarization tensors of perturbed core-shell spheres, and design of\n"
        "shells (or cores) that make them vanish.",
        epilog="Example usage:\n"
        "  ptshell neutral --out=out\n"
        "  ptshell design --config=design.json --n-theta=16 --log=info",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {ptshell.__version__}")
    args = parser.parse_args(argv)
    try:
        log.setup(args.log.upper())
    except PtshellValueError as e:
        # Logging isn't setup, so print error direct to stderr.
        print(e, file=sys.stderr)
        return 1

    cfg = cli.load_config(args)
    logger.info(f"Running {args.command} with config digest {cfg.digest()}")
    return cli.COMMANDS[args.command](cfg)
