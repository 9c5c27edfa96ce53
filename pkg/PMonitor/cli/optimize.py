# import
## batteries
import os
import sys
from typing import List
## 3rd party
import pandas as pd
from tabulate import tabulate
## package
from PMonitor.cli.utils import (
    CustomFormatter, add_common_args, apply_overrides, load_scenario, now,
    scenario_digest, threads_for, write_manifest,
)
from PMonitor.models import Scenario
from PMonitor.optimize import OptimizationReport, run_pipeline
from PMonitor.riccati import peaks_frame, trajectory_frame
from PMonitor.utils import write_csv, write_json

# functions
def optimize_parser(subparsers):
    help = 'Shortest tour, balanced dwell times and the best cycle period.'
    desc = """
    # Examples:
    pm optimize --config five_targets.json
    pm optimize --config five_targets.json --eps 1e-3 --tmin-scale 0.5
    """
    sub_parser = subparsers.add_parser(
        'optimize', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=optimize_main)
    add_common_args(sub_parser)
    sub_parser.add_argument('--eps', type=float, default=None,
                            help='Bracket width at which the period search stops (default: eps_scale * travel time)')
    sub_parser.add_argument('--tmin-scale', type=float, default=None,
                            help='Lower period bound as a multiple of the travel time')
    sub_parser.add_argument('--tmax-scale', type=float, default=None,
                            help='Upper period bound as a multiple of the travel time')
    sub_parser.add_argument('--kp', type=float, default=None,
                            help='Consensus gain')
    sub_parser.add_argument('--tol', type=float, default=None,
                            help='Relative peak spread at which balancing stops')
    sub_parser.add_argument('--max-iters', type=int, default=None,
                            help='Maximum balance update attempts per period')

def write_report(scenario: Scenario, report: OptimizationReport, outdir: str, prefix: str = "") -> List[str]:
    """Report JSON, search curve, balance trace, peaks and dense trajectories."""
    path = lambda name: os.path.join(outdir, prefix + name)
    outputs = [
        write_json(report.to_dict(), path("report.json")),
        write_json(report.schedule_dict(), path("schedule.json")),
        write_csv(report.search.sample_frame(), path("search_curve.csv")),
        write_csv(report.trace.frame(), path("balance_trace.csv")),
        write_csv(peaks_frame(report.peaks, scenario.norm), path("peaks.csv")),
    ]
    if report.trajectories:
        frames = [
            trajectory_frame(report.trajectories[i], scenario.target(i), scenario.norm)
            for i in scenario.ids
        ]
        outputs.append(write_csv(pd.concat(frames, ignore_index=True), path("trajectory.csv")))
    return outputs

def print_summary(report: OptimizationReport) -> None:
    print(
        f"# T* = {report.period:.8g}, cost = {report.cost:.8g}, tour = {list(report.tour.order)}",
        file=sys.stderr,
    )
    print(tabulate(report.summary_rows(), headers="keys", tablefmt="github", floatfmt=".8g"))

def optimize_main(args):
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient)
    scenario = apply_overrides(scenario, kp=args.kp, balance_tol=args.tol, max_iters=args.max_iters)
    report = run_pipeline(
        scenario, eps=args.eps, tmin_scale=args.tmin_scale, tmax_scale=args.tmax_scale,
        threads=threads_for(args),
    )
    outputs = write_report(scenario, report, args.out)
    write_manifest(args, started, outputs, scenario_digest(scenario))
    print_summary(report)


# main
if __name__ == '__main__':
    pass
