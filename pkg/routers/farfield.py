import argparse
from pathlib import Path
from typing import Any, Dict

from routers.common import add_common, common_overrides, parse_floats, parse_params, resolve_coefficient


def register(subparsers):
    parser = subparsers.add_parser("farfield", help="circle trace of a source and the far-field error of its resolvent")
    add_common(parser)
    parser.add_argument("--input", type=Path, required=False, help="HF2D dump of f (or of u with --nonlinear)")
    parser.add_argument("--nonlinear", action="store_true", default=None,
                        help="treat the dump as a solution u and trace Q|u|^{p-2}u")
    parser.add_argument("--Q", dest="q", help="preset name or closure descriptor file, used with --nonlinear")
    parser.add_argument("--Q-param", dest="q_param", action="append", metavar="KEY=VALUE")
    parser.add_argument("--annulus", type=parse_floats, action="append", help="r_in,r_out; repeatable")
    parser.add_argument("--cesaro-radii", type=parse_floats, help="radii of the averaged error")
    parser.add_argument("--theta-count", type=int, help="trace resolution (default 256)")
    parser.set_defaults(subcommand="farfield", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    out = {
        **common_overrides(args),
        "input_path": str(args.input) if args.input else None,
        "nonlinear": args.nonlinear,
        "annuli": [tuple(a) for a in args.annulus] if args.annulus else None,
        "cesaro_radii": args.cesaro_radii,
        "theta_count": args.theta_count,
    }
    if args.q:
        out.update(resolve_coefficient(args.q))
    if args.q_param:
        out["q_params"] = {**out.get("q_params", {}), **parse_params(args.q_param)}
    return out
