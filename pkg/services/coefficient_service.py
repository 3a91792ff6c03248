import math
from typing import Callable, Dict, Optional

import numpy as np
import structlog
from pydantic import ValidationError

from modals.experiment import Q_PRESETS
from modals.field import Grid, GridField
from modals.variational import Coefficient, CoefficientClass, CoefficientClosure
from services.errors import DomainError
from services.field_service import smooth_window

logger = structlog.get_logger(__name__)


class CoefficientService:
    """Named Q presets: one representative per coefficient class."""

    DEFAULTS: Dict[str, Dict[str, float]] = {
        "gaussian": {"q0": 2.0, "w": 1.0},
        "cosine-lattice": {"q1": 0.5},
        "disc": {"q0": 1.0, "r0": 1.0, "edge": 0.25},
    }
    KINDS = {
        "gaussian": CoefficientClass.DECAYING,
        "cosine-lattice": CoefficientClass.PERIODIC,
        "disc": CoefficientClass.COMPACT,
    }

    def closure(self, preset: str, params: Optional[Dict[str, float]] = None) -> CoefficientClosure:
        """Fill preset defaults and validate the parameters."""
        if preset not in Q_PRESETS:
            raise DomainError(f"unknown Q preset {preset!r}")
        merged = {**self.DEFAULTS[preset], **(params or {})}
        unknown = set(merged) - set(self.DEFAULTS[preset])
        if unknown:
            raise DomainError(f"unknown parameters for {preset}: {sorted(unknown)}")
        if preset == "cosine-lattice" and not 0.0 <= merged["q1"] < 1.0:
            raise DomainError("cosine-lattice needs 0 <= q1 < 1", q1=merged["q1"])
        if preset in ("gaussian", "disc") and merged["q0"] < 0:
            raise DomainError("q0 must be nonnegative", q0=merged["q0"])
        if preset == "gaussian" and merged["w"] <= 0:
            raise DomainError("gaussian width must be positive")
        if preset == "disc" and (merged["r0"] <= 0 or merged["edge"] <= 0):
            raise DomainError("disc radius and edge must be positive")
        return CoefficientClosure(preset=preset, params=merged)

    def radial_profile(self, closure: CoefficientClosure) -> Callable[[np.ndarray], np.ndarray]:
        """Q as a function of r for the radial presets."""
        prm = closure.params
        if closure.preset == "gaussian":
            return lambda r: prm["q0"] * np.exp(-(np.asarray(r, dtype=float) / prm["w"]) ** 2)
        if closure.preset == "disc":
            return lambda r: prm["q0"] * smooth_window(r, prm["r0"], prm["r0"] + prm["edge"])
        raise DomainError(f"preset {closure.preset!r} is not radial")

    def evaluate(self, closure: CoefficientClosure, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        if closure.preset == "cosine-lattice":
            q1 = closure.params["q1"]
            return 1.0 + q1 * np.cos(2.0 * math.pi * x1) * np.cos(2.0 * math.pi * x2)
        return self.radial_profile(closure)(np.hypot(x1, x2))

    def build(self, preset: str, grid: Grid, params: Optional[Dict[str, float]] = None) -> Coefficient:
        """Sample a preset on `grid` (Q centred at the origin, not at the grid centre)."""
        closure = self.closure(preset, params)
        x1, x2 = grid.mesh()
        samples = GridField.from_array(grid, self.evaluate(closure, x1, x2))
        logger.debug("coefficient sampled", preset=preset, n=grid.n, h=grid.h)
        try:
            return Coefficient(samples=samples, kind=self.KINDS[preset], closure=closure)
        except ValidationError as exc:
            raise DomainError(exc.errors()[0]["msg"], preset=preset, n=grid.n, h=grid.h)

    def from_closure(self, closure: CoefficientClosure, grid: Grid) -> Coefficient:
        return self.build(closure.preset, grid, closure.params)


# --- Create Singleton Instance ---
coefficient_service = CoefficientService()
