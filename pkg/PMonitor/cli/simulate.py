# import
## batteries
import os
import sys
## 3rd party
from pydantic import ValidationError
from tabulate import tabulate
## package
from PMonitor.cli.utils import (
    CustomFormatter, add_common_args, load_scenario, load_schedule, now,
    scenario_digest, threads_for, write_manifest,
)
from PMonitor.errors import InputError, InsufficientRuns
from PMonitor.optimize import run_pipeline
from PMonitor.simkf import SimConfig, empirical_error_stats, simulate
from PMonitor.utils import write_csv, write_json

# functions
def simulate_parser(subparsers):
    help = 'Monte-Carlo simulation of the targets and the Kalman-Bucy filter.'
    desc = """
    Without --schedule, the optimized schedule (pm optimize) is simulated.

    # Examples:
    pm simulate --config five_targets.json --schedule pm_out/schedule.json --seed 7 --cycles 20
    pm simulate --config scalar.json --schedule sched.json --runs 500 --phase 0.0
    """
    sub_parser = subparsers.add_parser(
        'simulate', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=simulate_main)
    add_common_args(sub_parser)
    sub_parser.add_argument('--schedule', type=str, default=None,
                            help='Schedule JSON file ({"visits": [...], "dwell": [...]})')
    sub_parser.add_argument('--seed', type=int, default=0,
                            help='Random seed')
    sub_parser.add_argument('--cycles', type=int, default=20,
                            help='Number of cycles to simulate (>= 3)')
    sub_parser.add_argument('--dt', type=float, default=1e-3,
                            help='Simulation step')
    sub_parser.add_argument('--stride', type=int, default=10,
                            help='Record every n-th step (event starts are always recorded)')
    sub_parser.add_argument('--horizon', type=float, default=None,
                            help='Stop at this time instead of after the last full cycle')
    sub_parser.add_argument('--runs', type=int, default=1,
                            help='Independent runs; with more than one, error statistics are written')
    sub_parser.add_argument('--phase', type=float, default=0.0,
                            help='Cycle phase at which error statistics are taken')

def simulate_main(args):
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient)
    threads = threads_for(args)
    if args.schedule:
        schedule = load_schedule(args.schedule, scenario.graph, lenient=args.lenient)
    else:
        schedule = run_pipeline(scenario, threads=threads, dense=False).schedule(scenario)
    try:
        cfg = SimConfig(
            seed=args.seed, cycles=args.cycles, dt_sim=args.dt, stride=args.stride, horizon=args.horizon
        )
    except ValidationError as e:
        raise InputError(f"invalid simulation settings: {e.errors()[0]['msg']}")
    trace = simulate(scenario, schedule, cfg, threads=threads)
    outputs = [write_csv(trace.frame(), os.path.join(args.out, "sim_trace.csv"))]
    if args.runs > 1:
        stats = empirical_error_stats(scenario, schedule, cfg, args.runs, args.phase, threads=threads)
        result = [s.to_dict() for s in stats.values()]
        outputs.append(write_json(result, os.path.join(args.out, "error_stats.json")))
        rows = [
            {"target_id": s.target_id, "phase": s.phase, "trace_cov": float(s.covariance.trace()),
             "trace_omega": float(s.omega.trace())}
            for s in stats.values()
        ]
        print(tabulate(rows, headers="keys", tablefmt="github", floatfmt=".6g"))
    elif args.runs < 1:
        raise InsufficientRuns(f"--runs must be at least 1, got {args.runs}")
    write_manifest(args, started, outputs, scenario_digest(scenario))
    print(f"# Simulated {len(trace.targets)} targets over period {trace.period:.6g}", file=sys.stderr)


# main
if __name__ == '__main__':
    pass
