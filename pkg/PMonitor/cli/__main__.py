#!/usr/bin/env python
# libraries
## batteries
import sys
import logging
import argparse
from typing import List, Optional
## 3rd party
from dotenv import load_dotenv
## package
from PMonitor.cli.utils import CustomFormatter
from PMonitor.cli.validate import validate_parser, validate_main
from PMonitor.cli.tour import tour_parser, tour_main
from PMonitor.cli.schedule import schedule_parser, schedule_main
from PMonitor.cli.balance import balance_parser, balance_main
from PMonitor.cli.optimize import optimize_parser, optimize_main
from PMonitor.cli.simulate import simulate_parser, simulate_main
from PMonitor.cli.reproduce import reproduce_parser, reproduce_main
from PMonitor.errors import PMonitorError
from PMonitor.utils import to_json


# functions
def arg_parse(args: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parse command line arguments.
    """
    desc = "PMonitor: periodic observation schedules for one mobile sensor"
    epi = """DESCRIPTION:
    PMonitor computes visiting tours, dwell times and cycle periods for a single agent
    that persistently monitors targets with unstable linear stochastic dynamics, so that
    the largest steady-state estimation uncertainty over all targets is minimal.

    Exit codes: 0 success, 1 invalid input, 2 numerical failure.
    Errors are written to stderr as JSON.
    """
    # main parser
    parser = argparse.ArgumentParser(
        prog="pm",
        description=desc,
        epilog=epi,
        formatter_class=CustomFormatter
    )

    # subparsers
    subparsers = parser.add_subparsers(dest="command", help="Subcommands")
    ## scenario checks
    validate_parser(subparsers)
    ## visiting order
    tour_parser(subparsers)
    ## per-target view of a schedule
    schedule_parser(subparsers)
    ## dwell-time balancing at a fixed period
    balance_parser(subparsers)
    ## period search
    optimize_parser(subparsers)
    ## Monte-Carlo filter simulation
    simulate_parser(subparsers)
    ## five-target experiment
    reproduce_parser(subparsers)
    # parsing args
    return parser.parse_args(args)

def main(argv: Optional[List[str]] = None) -> int:
    # load environment variables
    load_dotenv(override=True)
    # parsing args
    args = arg_parse(argv)

    # which subcommand
    if not args.command:
        print("Provide a subcommand or use -h/--help for help", file=sys.stderr)
        return 0
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s - %(message)s",
    )
    try:
        args.func(args)
    except PMonitorError as e:
        print(to_json(e.to_dict()), file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
