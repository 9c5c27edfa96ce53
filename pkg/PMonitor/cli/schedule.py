# import
## batteries
import os
## package
from PMonitor.cli.utils import (
    CustomFormatter, add_common_args, load_scenario, load_schedule, now, parse_float_list,
    parse_int_list, print_json, scenario_digest, write_manifest,
)
from PMonitor.errors import Issue, ScenarioError
from PMonitor.schedule import AgentSchedule, cycle_period, events_frame, to_target_view
from PMonitor.utils import write_csv, write_json

# functions
def schedule_parser(subparsers):
    help = 'Per-target view (dwell, off times, visit starts) of an agent schedule.'
    desc = """
    # Examples:
    pm schedule --config s.json --sequence 1,2,1 --dwell 1,1,1
    pm schedule --config s.json --schedule sched.json
    """
    sub_parser = subparsers.add_parser(
        'schedule', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=schedule_main)
    add_common_args(sub_parser)
    sub_parser.add_argument('--schedule', type=str, default=None,
                            help='Schedule JSON file ({"visits": [...], "dwell": [...]})')
    sub_parser.add_argument('--sequence', '--visits', dest='sequence', type=parse_int_list, default=None,
                            help='Comma-separated visiting sequence of target ids')
    sub_parser.add_argument('--dwell', type=parse_float_list, default=None,
                            help='Comma-separated dwell time per visit')

def schedule_from_args(args, scenario) -> AgentSchedule:
    if args.schedule:
        return load_schedule(args.schedule, scenario.graph, lenient=args.lenient)
    if args.sequence is None or args.dwell is None:
        raise ScenarioError([Issue("InvalidSchedule", "give --schedule or both --sequence and --dwell")])
    return AgentSchedule(visits=tuple(args.sequence), dwell=tuple(args.dwell), graph=scenario.graph)

def schedule_main(args):
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient)
    schedule = schedule_from_args(args, scenario)
    timelines = to_target_view(schedule, scenario.ids)
    result = {
        "period": cycle_period(schedule),
        "visits": list(schedule.visits),
        "dwell": list(schedule.dwell),
        "targets": [tl.to_dict() for tl in timelines],
    }
    outputs = [
        write_json(result, os.path.join(args.out, "timelines.json")),
        write_csv(events_frame(schedule), os.path.join(args.out, "events.csv")),
    ]
    write_manifest(args, started, outputs, scenario_digest(scenario))
    print_json(result)


# main
if __name__ == '__main__':
    pass
