import argparse
from pathlib import Path
from typing import Any, Dict

from routers.common import add_common, common_overrides, parse_floats


def register(subparsers):
    parser = subparsers.add_parser("resolve", help="apply the outgoing resolvent to a field dump")
    add_common(parser)
    parser.add_argument("--input", type=Path, help="HF2D source dump (default: a unit Gaussian on --grid)")
    parser.add_argument("--annulus", type=parse_floats, action="append",
                        help="r_in,r_out of an annulus to export; repeatable")
    parser.set_defaults(subcommand="resolve", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    annuli = [tuple(a) for a in args.annulus] if args.annulus else None
    return {**common_overrides(args), "input_path": str(args.input) if args.input else None, "annuli": annuli}
