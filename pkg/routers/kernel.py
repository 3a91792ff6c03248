import argparse
from typing import Any, Dict

from routers.common import add_common, common_overrides, parse_pair


def register(subparsers):
    parser = subparsers.add_parser("kernel", help="tabulate Φ(r) and the ratio to its two-regime bound")
    add_common(parser)
    parser.add_argument("--r-range", type=parse_pair, help="r_min,r_max of the log-spaced table (default 1e-6,1e4)")
    parser.add_argument("--points", type=int, help="number of radii (default 1000)")
    parser.set_defaults(subcommand="kernel", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {**common_overrides(args), "r_range": args.r_range, "kernel_points": args.points}
