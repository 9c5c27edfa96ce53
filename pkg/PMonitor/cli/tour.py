# import
## batteries
import os
## package
from PMonitor.cli.utils import CustomFormatter, add_common_args, load_scenario, now, print_json, scenario_digest, write_manifest
from PMonitor.graph import solve_tsp, solve_tsp_exact, solve_tsp_heuristic
from PMonitor.utils import write_json

# functions
def tour_parser(subparsers):
    help = 'Shortest single-visit cycle through every target.'
    desc = """
    # Examples:
    pm tour --config five_targets.json
    pm tour --config big.json --method heuristic
    """
    sub_parser = subparsers.add_parser(
        'tour', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=tour_main)
    add_common_args(sub_parser)
    sub_parser.add_argument('--method', type=str, default='auto',
                            choices=['auto', 'exact', 'heuristic'],
                            help='Exact Held-Karp, nearest-neighbour + 2-opt, or exact up to the cap')

def tour_main(args):
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient)
    cap = scenario.solver.tsp_exact_cap
    if args.method == "exact":
        tour = solve_tsp_exact(scenario.graph, cap=cap)
    elif args.method == "heuristic":
        tour = solve_tsp_heuristic(scenario.graph)
    else:
        tour = solve_tsp(scenario.graph, cap=cap)
    outfile = write_json(tour.to_dict(), os.path.join(args.out, "tour.json"))
    write_manifest(args, started, [outfile], scenario_digest(scenario))
    print_json(tour.to_dict())


# main
if __name__ == '__main__':
    pass
