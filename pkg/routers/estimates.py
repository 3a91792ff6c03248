import argparse
from typing import Any, Dict

from modals.experiment import EstimateScan
from routers.common import add_common, common_overrides, parse_floats, parse_ints


def register(subparsers):
    parser = subparsers.add_parser("estimates", help="numerical probes of the kernel estimates")
    add_common(parser)
    parser.add_argument("--scan", action="append", choices=[s.value for s in EstimateScan],
                        help="scan to run; repeatable (default dyadic)")
    parser.add_argument("--j-range", type=parse_ints, help="j_min,j_max of the dyadic scan (default 3,8)")
    parser.add_argument("--radii", type=parse_floats, help="truncation radii of the Φ₁ scan")
    parser.add_argument("--k-values", type=parse_ints, help="frequencies of the endpoint family")
    parser.add_argument("--p-values", type=parse_floats, help="exponents of the boundedness probe")
    parser.add_argument("--family-sizes", type=parse_ints, help="family sizes of the boundedness probe")
    parser.add_argument("--dilations", type=parse_floats, help="dilations of the vanishing probe")
    parser.set_defaults(subcommand="estimates", overrides=overrides)


def overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        **common_overrides(args),
        "scans": args.scan,
        "j_range": tuple(args.j_range) if args.j_range else None,
        "truncation_radii": args.radii,
        "k_values": args.k_values,
        "p_values": args.p_values,
        "family_sizes": args.family_sizes,
        "dilations": args.dilations,
    }
