import argparse
import sys
from pathlib import Path
from typing import List, Optional

import structlog

# Import routers
from routers import decomp, estimates, farfield, kernel, oracle, resolve, solve
from runtime.environment import runtime_env
from services.errors import HelmholtzError
from services.experiment_service import experiment_service

logger = structlog.get_logger(__name__)

ROUTERS = (kernel, resolve, estimates, solve, farfield, oracle, decomp)


class CliParser(argparse.ArgumentParser):
    """Usage errors exit with 1; exit code 2 is reserved for solver failures."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="hf2d",
        description="Numerical laboratory for the planar Helmholtz resolvent and its nonlinear standing waves.",
    )
    parser.add_argument("--config", type=Path, help="JSON experiment file; flags override its entries")
    parser.add_argument("--threads", type=int, help="worker cap (default $HF2D_THREADS, else 1)")
    parser.add_argument("--log-level", help="DEBUG | INFO | WARNING | ERROR (default $HF2D_LOG_LEVEL, else INFO)")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for router in ROUTERS:
        router.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one experiment; returns 0 on success, 1 on invalid input, 2 on solver failure."""
    args = build_parser().parse_args(argv)
    try:
        runtime_env.configure(threads=args.threads, log_level=args.log_level)
        overrides = {"subcommand": args.subcommand, **args.overrides(args)}
        config = experiment_service.parse_config(args.config, overrides)
        manifest = experiment_service.run(config)
    except HelmholtzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    # Global exception handler
    except Exception as exc:
        logger.exception("unexpected failure", error=str(exc))
        return 1
    if manifest.failure:
        print(f"error: {manifest.failure['type']}: {manifest.failure['detail']}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
