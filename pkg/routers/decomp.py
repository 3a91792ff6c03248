import argparse
from typing import Any, Dict

from routers.common import add_common, common_overrides


def register(subparsers):
    parser = subparsers.add_parser("decomp", help="split Φ into its oscillatory and local parts")
    add_common(parser)
    parser.set_defaults(subcommand="decomp", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return common_overrides(args)
