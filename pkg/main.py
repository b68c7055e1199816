"""
Main entry point for Churn Lab.
"""

import argparse
import os
import sys
from typing import List, Optional

# Add the current directory to Python path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from utils.logger import get_logger, set_level

logger = get_logger(__name__)

from config import APP_NAME, APP_VERSION
from cli.commands import COMMANDS, run_command
from cli.config import describe_schema, parse_config
from exceptions import ChurnLabError


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the global flags and the subcommand positional."""
    keys = "\n".join(f"  {key} (default: {default or '-'}) {text}" for key, default, text in describe_schema())
    parser = argparse.ArgumentParser(
        prog="churnlab",
        description=f"{APP_NAME}: measure and reduce cross-sample prediction churn.",
        epilog=f"config keys (key=value in --config files or --set):\n{keys}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS, help="study to run")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--seed", type=int, help="base seed (config key 'seed')")
    parser.add_argument("--jobs", type=int, help="parallel training workers (config key 'jobs')")
    parser.add_argument("--out", help="output directory (config key 'out')")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on the console")
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        set_level("DEBUG")
    overrides = list(args.overrides)
    for key in ("seed", "jobs", "out"):
        value = getattr(args, key)
        if value is not None:
            overrides.append(f"{key}={value}")

    logger.info("Starting %s %s: %s", APP_NAME, APP_VERSION, args.command)
    try:
        cfg = parse_config(args.config, overrides)
        return run_command(args.command, cfg)
    except ChurnLabError as e:
        logger.error("%s failed: %s", args.command, str(e))
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.critical("Unexpected failure in %s: %s", args.command, str(e), exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
