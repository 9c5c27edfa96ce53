# import
## batteries
import os
import sys
## 3rd party
from tabulate import tabulate
## package
from PMonitor.cli.utils import (
    CustomFormatter, add_common_args, apply_overrides, load_scenario, now,
    parse_int_list, scenario_digest, threads_for, write_manifest,
)
from PMonitor.balance import balance_until_converged
from PMonitor.graph import Tour, solve_tsp, tour_travel_time
from PMonitor.utils import write_csv, write_json

# functions
def balance_parser(subparsers):
    help = 'Balance dwell times at a fixed period until the weighted peaks are equal.'
    desc = """
    # Examples:
    pm balance --config five_targets.json --period 2.5
    pm balance --config five_targets.json --period 2.5 --kp 0.02 --tour 1,3,5,4,2
    """
    sub_parser = subparsers.add_parser(
        'balance', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=balance_main)
    add_common_args(sub_parser)
    sub_parser.add_argument('--period', type=float, required=True,
                            help='Cycle period T')
    sub_parser.add_argument('--tour', type=parse_int_list, default=None,
                            help='Visiting order (default: shortest tour)')
    sub_parser.add_argument('--kp', type=float, default=None,
                            help='Consensus gain (default from settings)')
    sub_parser.add_argument('--tol', type=float, default=None,
                            help='Relative peak spread at which to stop')
    sub_parser.add_argument('--max-iters', type=int, default=None,
                            help='Maximum number of update attempts')

def tour_from_args(args, scenario) -> Tour:
    if getattr(args, "tour", None):
        order = tuple(args.tour)
        return Tour(order=order, travel_time=tour_travel_time(scenario.graph.closure, order))
    return solve_tsp(scenario.graph, cap=scenario.solver.tsp_exact_cap)

def balance_main(args):
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient)
    scenario = apply_overrides(scenario, kp=args.kp, balance_tol=args.tol, max_iters=args.max_iters)
    tour = tour_from_args(args, scenario)
    trace = balance_until_converged(scenario, tour, args.period, threads=threads_for(args))
    outputs = [
        write_json(trace.to_dict(), os.path.join(args.out, "balance_trace.json")),
        write_csv(trace.frame(), os.path.join(args.out, "balance_trace.csv")),
    ]
    write_manifest(args, started, outputs, scenario_digest(scenario))
    # summary
    rows = [
        {"target_id": i, "t_on": t, "peak": p}
        for i, t, p in zip(trace.target_ids, trace.final.t_on, trace.final.peaks)
    ]
    print(f"# Status: {trace.status.value} after {trace.iterations} iterations", file=sys.stderr)
    print(tabulate(rows, headers="keys", tablefmt="github", floatfmt=".8g"))


# main
if __name__ == '__main__':
    pass
