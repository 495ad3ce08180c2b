"""
Chhaya: dynamic-object tracking and depth masking for RGB-D SLAM.
Entry point. Parses the command line, resolves configuration and dispatches
to the run, synth and eval subcommands.
"""

import argparse
import logging
import os
import sys

from dotenv import load_dotenv
from rich.logging import RichHandler

from pipeline.commands import COMMANDS, EXIT_USAGE
from pipeline.config import add_config_arguments, load_config, overrides_from_args
from scene.errors import ConfigError

logger = logging.getLogger("chhaya")


class UsageParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with EXIT_USAGE instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(
        prog="chhaya",
        description="Track dynamic objects in RGB-D sequences and mask them out of the depth stream.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="track and mask a TUM-layout sequence")
    run.add_argument("sequence_dir", nargs="?", help="sequence directory (same as --sequence)")

    synth = subparsers.add_parser("synth", help="render a synthetic sequence from a scene script")
    synth.add_argument("script_file", nargs="?", help="scene script (same as --script)")

    subparsers.add_parser("eval", help="trajectory and tracking metrics")

    for sub in subparsers.choices.values():
        add_config_arguments(sub)
    return parser


def setup_logging(level: str):
    level = level.upper()
    if level not in logging.getLevelNamesMapping():
        level = "INFO"
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
    )


def main(argv: list[str] | None = None) -> int:
    """Load configuration, set up logging and run one subcommand."""
    load_dotenv()

    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = overrides_from_args(args)
    if getattr(args, "sequence_dir", None):
        overrides.setdefault("sequence", args.sequence_dir)
    if getattr(args, "script_file", None):
        overrides.setdefault("script", args.script_file)

    setup_logging(overrides.get("log_level") or os.environ.get("CHHAYA_LOG_LEVEL", "INFO"))

    try:
        config = load_config(args.config, overrides=overrides)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_USAGE

    logger.debug("Running %s", args.command)
    return COMMANDS[args.command](config)


if __name__ == "__main__":
    sys.exit(main())
