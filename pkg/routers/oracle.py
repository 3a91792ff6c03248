import argparse
from typing import Any, Dict

from routers.common import add_common, common_overrides, parse_pair, parse_params


def register(subparsers):
    parser = subparsers.add_parser("oracle", help="radial shooting solution for a radial Q")
    add_common(parser)
    parser.add_argument("--Q-preset", dest="q_preset", choices=["gaussian", "disc"], help="radial preset")
    parser.add_argument("--Q-param", dest="q_param", action="append", metavar="KEY=VALUE")
    parser.add_argument("--a-bracket", type=parse_pair, help="amplitude bracket a_lo,a_hi (default 0.2,3)")
    parser.add_argument("--Rmax", dest="r_max", type=float, help="outer radius (default 200)")
    parser.set_defaults(subcommand="oracle", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        **common_overrides(args),
        "q_preset": args.q_preset,
        "q_params": parse_params(args.q_param) if args.q_param else None,
        "a_bracket": args.a_bracket,
        "r_max": args.r_max,
    }
