import argparse
from typing import Any, Dict

from modals.experiment import SolverMode
from routers.common import add_common, common_overrides, parse_params, resolve_coefficient


def register(subparsers):
    parser = subparsers.add_parser("solve", help="find a real standing wave of Δu + u + Q|u|^{p-2}u = 0")
    add_common(parser)
    parser.add_argument("--Q", dest="q", help="preset name or closure descriptor file (default gaussian)")
    parser.add_argument("--Q-param", dest="q_param", action="append", metavar="KEY=VALUE",
                        help="preset parameter; repeatable")
    parser.add_argument("--mode", choices=[m.value for m in SolverMode], help="solver (default fixed-point)")
    parser.add_argument("--tol", type=float, help="residual tolerance (default 1e-6)")
    parser.add_argument("--max-iter", type=int, help="iteration cap (default 400)")
    parser.add_argument("--damping", type=float, help="initial damping in (0, 1] (default 0.5)")
    parser.set_defaults(subcommand="solve", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    out = {**common_overrides(args), "mode": args.mode, "tol": args.tol, "max_iter": args.max_iter,
           "damping": args.damping}
    if args.q:
        out.update(resolve_coefficient(args.q))
    if args.q_param:
        out["q_params"] = {**out.get("q_params", {}), **parse_params(args.q_param)}
    return out
