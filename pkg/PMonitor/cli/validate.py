# import
## batteries
import os
## package
from PMonitor.cli.utils import CustomFormatter, add_common_args, load_scenario, now, print_json, scenario_digest, write_manifest
from PMonitor.errors import ScenarioError
from PMonitor.models import scenario_issues
from PMonitor.utils import write_json

# functions
def validate_parser(subparsers):
    help = 'Check a scenario against the modelling assumptions.'
    desc = """
    Checks every target (unstable drift, detectability, positive-definite Q and R,
    dimensions) and the travel graph (symmetric, zero diagonal, nonnegative, connected).
    Every issue found is reported, not only the first.
    """
    sub_parser = subparsers.add_parser(
        'validate', help=help, description=desc, formatter_class=CustomFormatter
    )
    sub_parser.set_defaults(func=validate_main)
    add_common_args(sub_parser)

def validate_main(args):
    """
    Validate the scenario; raises ScenarioError (exit 1) listing all issues.
    """
    started = now()
    scenario = load_scenario(args.config, lenient=args.lenient, validate=False)
    issues = scenario_issues(scenario)
    result = {
        "valid": not issues,
        "targets": scenario.M,
        "issues": [i.to_dict() for i in issues],
    }
    outfile = write_json(result, os.path.join(args.out, "validation.json"))
    digest = scenario_digest(scenario) if scenario.M else None
    write_manifest(args, started, [outfile], digest)
    if issues:
        raise ScenarioError(issues)
    print_json(result)


# main
if __name__ == '__main__':
    pass
