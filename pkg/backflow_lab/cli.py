"""Command-line entry for backflow-lab"""
import argparse
import sys

from backflow_lab.color_utils import print_error, print_success
from backflow_lab.config import PRESETS, Colors, ExitCode
from backflow_lab.errors import BackflowLabError
from backflow_lab.experiment import ExperimentConfig
from backflow_lab.runner import run


def cmd_run(args):
    """Run the experiment described by a config file."""
    try:
        config = ExperimentConfig.load(args.config)
    except (BackflowLabError, ValueError) as e:
        print_error(f"[CLI] {e}")
        return ExitCode.CONFIG_ERROR
    code, _ = run(config, workers=args.threads)
    return code


def cmd_validate(args):
    """Parse a config and check that its dynamics are CPTP on the grid."""
    try:
        config = ExperimentConfig.load(args.config)
        config.trajectory(workers=args.threads)
    except (BackflowLabError, ValueError) as e:
        print_error(f"[CLI] {e}")
        return ExitCode.CONFIG_ERROR
    print_success(
        f"[CLI] {args.config} is valid: {config.dynamics.kind}, {len(config.times)} grid points, "
        f"{len(config.lambdas)} lambda values"
    )
    return ExitCode.OK


def cmd_presets(_args):
    """List the dynamics presets on standard output."""
    for name, entry in PRESETS.items():
        params = ", ".join(f"{k}={v}" for k, v in entry["params"].items())
        print(f"{Colors.highlight(name)}  ({params})")
        print(f"    {entry['description']}")
    return ExitCode.OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="backflow-lab",
        description="backflow-lab - correlation backflow witnesses for non-CP-divisible dynamics",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run.py presets                 List dynamics presets
  python run.py validate config.json    Check a config without running it
  python run.py run config.json         Run the scans and write CSV/JSON/SVG

Exit codes: 0 success, 2 config error, 3 solver non-convergence, 4 I/O error.
        """
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="Worker count (capped by BACKFLOW_LAB_THREADS)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Run an experiment config")
    p_run.add_argument("config", help="Path to the JSON experiment config")
    p_run.set_defaults(func=cmd_run)

    p_validate = sub.add_parser("validate", help="Validate an experiment config")
    p_validate.add_argument("config", help="Path to the JSON experiment config")
    p_validate.set_defaults(func=cmd_validate)

    p_presets = sub.add_parser("presets", help="List dynamics presets")
    p_presets.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
