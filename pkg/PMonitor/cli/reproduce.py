# import
## batteries
import os
import sys
from importlib import resources
## 3rd party
import numpy as np
import pandas as pd
from tabulate import tabulate
## package
from PMonitor.cli.utils import (
    CustomFormatter, add_common_args, load_scenario, now, scenario_digest,
    threads_for, write_manifest,
)
from PMonitor.graph import euclidean_graph
from PMonitor.models import Scenario, TargetModel
from PMonitor.optimize import EqualizedCost, OptimizationReport, period_bracket, run_pipeline, sweep_period
from PMonitor.riccati import trajectory_frame
from PMonitor.utils import write_csv, write_json

# functions
def reproduce_parser(subparsers):
    help = 'Five-target experiment: tour, balanced dwell times, period search and figure data.'
    desc = """
    Target positions are drawn uniformly from [0, 0.5]^2 with the given seed; drift,
    noise and observation values are the packaged five-target scenario.

    # Outputs (under --out):
    fig2_covariance.csv   limit cycle of every target at the optimum
    fig3a_search_curve.csv periods sampled by the golden-section search
    fig3a_sweep.csv       balanced peak on a period grid (--curve-points > 0)
    fig3b_peaks.csv       weighted peaks per balance iteration at the optimum
    fig3c_dwell.csv       dwell times per balance iteration at the optimum
    tour.json, report.json
    """
    sub_parser = subparsers.add_parser(
        'reproduce-paper', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=reproduce_main)
    add_common_args(sub_parser, config=False)
    sub_parser.add_argument('--seed', type=int, default=42,
                            help='Seed of the target positions')
    sub_parser.add_argument('--config', type=str, default=None,
                            help='Scenario file (default: the packaged five-target scenario)')
    sub_parser.add_argument('--eps', type=float, default=None,
                            help='Bracket width at which the period search stops')
    sub_parser.add_argument('--curve-points', type=int, default=0,
                            help='Grid points of the balanced-peak curve (0 = skip)')

def five_targets_path() -> str:
    return str(resources.files("PMonitor").joinpath("data", "five_targets.json"))

def seeded_positions(seed: int, n: int) -> np.ndarray:
    """n positions uniform on [0, 0.5]^2."""
    return np.random.default_rng(seed).uniform(0.0, 0.5, size=(n, 2))

def with_positions(scenario: Scenario, positions: np.ndarray) -> Scenario:
    """The same targets placed at new positions (complete Euclidean graph)."""
    targets = tuple(
        TargetModel(
            id=t.id, A=t.A, H=t.H, Q=t.Q, R=t.R, label=t.label,
            position=tuple(positions[k]), weight=t.weight, B=t.B,
        )
        for k, t in enumerate(scenario.targets)
    )
    return Scenario(
        targets=targets, graph=euclidean_graph(positions), norm=scenario.norm,
        solver=scenario.solver, name=scenario.name,
    )

def figure_tables(scenario: Scenario, report: OptimizationReport) -> dict:
    """Figure data frames keyed by file name."""
    labels = {t.id: t.label for t in scenario.targets}
    cov = pd.concat(
        [trajectory_frame(report.trajectories[i], scenario.target(i), scenario.norm) for i in scenario.ids],
        ignore_index=True,
    )
    cov.insert(1, "label", cov["target_id"].map(labels))
    trace = report.trace.frame()
    peaks = trace[["iteration"] + [f"peak_{i}" for i in scenario.ids] + ["g_avg"]]
    dwell = trace[["iteration"] + [f"t_on_{i}" for i in scenario.ids]]
    return {
        "fig2_covariance.csv": cov,
        "fig3a_search_curve.csv": report.search.sample_frame(),
        "fig3b_peaks.csv": peaks,
        "fig3c_dwell.csv": dwell,
    }

def reproduce_main(args):
    started = now()
    base = load_scenario(args.config or five_targets_path(), lenient=args.lenient)
    scenario = with_positions(base, seeded_positions(args.seed, base.M))
    threads = threads_for(args)
    report = run_pipeline(scenario, eps=args.eps, threads=threads)

    outputs = []
    for name, df in figure_tables(scenario, report).items():
        outputs.append(write_csv(df, os.path.join(args.out, name)))
    if args.curve_points > 0:
        t_min, t_max, _ = period_bracket(report.tour, scenario.solver)
        f = EqualizedCost(scenario, report.tour, scenario.solver, threads)
        grid = np.linspace(t_min, t_max, args.curve_points)
        outputs.append(write_csv(sweep_period(f, grid), os.path.join(args.out, "fig3a_sweep.csv")))
    outputs.append(write_json(report.tour.to_dict(), os.path.join(args.out, "tour.json")))
    result = report.to_dict()
    result.update({
        "seed": args.seed,
        "scenario_digest": scenario_digest(scenario),
        "positions": scenario.graph.positions.tolist(),
        "labels": {str(t.id): t.label for t in scenario.targets},
    })
    outputs.append(write_json(result, os.path.join(args.out, "report.json")))
    write_manifest(args, started, outputs, scenario_digest(scenario))

    rows = [dict(r, label=scenario.target(r["target_id"]).label) for r in report.summary_rows()]
    print(f"# T* = {report.period:.8g}, cost = {report.cost:.8g}, tour = {list(report.tour.order)}", file=sys.stderr)
    print(tabulate(rows, headers="keys", tablefmt="github", floatfmt=".8g"))


# main
if __name__ == '__main__':
    pass
