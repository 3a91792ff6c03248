import argparse
import json
from pathlib import Path
from typing import Any, Dict, List, Tuple

from services.errors import ConfigError


def parse_grid(text: str) -> Dict[str, Any]:
    """'n,h' -> {"n": n, "h": h}."""
    try:
        n, h = text.split(",")
        return {"n": int(n), "h": float(h)}
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected n,h (e.g. 1024,0.3927), got {text!r}")


def parse_pair(text: str) -> Tuple[float, float]:
    try:
        lo, hi = text.split(",")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")


def parse_floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def parse_ints(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def parse_params(items: List[str]) -> Dict[str, float]:
    """['q0=2', 'w=1.5'] -> {"q0": 2.0, "w": 1.5}."""
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}", field="q_params")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"{key} must be a number", field="q_params")
    return params


def resolve_coefficient(value: str) -> Dict[str, Any]:
    """
    --Q accepts a preset name or a JSON closure descriptor file
    {"preset": ..., "params": {...}}.
    """
    path = Path(value)
    if value.endswith(".json") or path.is_file():
        try:
            descriptor = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(exc), field="q_preset")
        if not isinstance(descriptor, dict) or "preset" not in descriptor:
            raise ConfigError("closure descriptor needs a 'preset' entry", field="q_preset")
        return {"q_preset": descriptor["preset"], "q_params": descriptor.get("params", {})}
    return {"q_preset": value}


def add_common(parser: argparse.ArgumentParser):
    """Flags shared by every subcommand; unset flags leave the file value alone."""
    parser.add_argument("--grid", type=parse_grid, help="n,h (default 1024,π/8)")
    parser.add_argument("--p", type=float, help="nonlinearity exponent (default 6)")
    parser.add_argument("--seed", type=int, help="seed of the probe families (default 0)")
    parser.add_argument("--output-dir", type=Path, help="artifact directory (default $HF2D_OUTPUT_DIR/<subcommand>)")
    parser.add_argument("--origin-rule", choices=["lattice", "cell-average"], help="kernel value at x = 0")


def common_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "grid": args.grid,
        "p": args.p,
        "seed": args.seed,
        "output_dir": str(args.output_dir) if args.output_dir else None,
        "origin_rule": args.origin_rule,
    }
