import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CODE_VERSION = "1.0.0"

Q_PRESETS = ("gaussian", "cosine-lattice", "disc")

# --- Internal Data Structures ---

class Subcommand(str, Enum):
    KERNEL = "kernel"
    RESOLVE = "resolve"
    ESTIMATES = "estimates"
    SOLVE = "solve"
    FARFIELD = "farfield"
    ORACLE = "oracle"
    DECOMP = "decomp"


class SolverMode(str, Enum):
    FIXED_POINT = "fixed-point"
    DUAL = "dual"
    PERIODIC = "periodic"


class EstimateScan(str, Enum):
    DYADIC = "dyadic"
    TRUNCATED = "truncated"
    ENDPOINT = "endpoint"
    BOUNDEDNESS = "boundedness"
    VANISHING = "vanishing"


class GridSpec(BaseModel):
    n: int = Field(1024, description="Points per side, power of two >= 16.")
    h: float = Field(2.0 * math.pi / 16.0, gt=0, description="Grid spacing.")

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, n: int) -> int:
        if n < 16 or n & (n - 1):
            raise ValueError(f"must be a power of two >= 16, got {n}")
        return n

    @property
    def half_side(self) -> float:
        return 0.5 * self.n * self.h


# --- Experiment configuration (file + flags) ---

class ExperimentConfig(BaseModel):
    """One experiment; every default is what `--help` documents."""
    model_config = ConfigDict(extra="forbid")

    subcommand: Subcommand
    grid: GridSpec = Field(default_factory=GridSpec)
    p: float = Field(6.0, gt=2.0, description="Nonlinearity exponent.")
    q_preset: str = Field("gaussian", description="gaussian | cosine-lattice | disc")
    q_params: Dict[str, float] = Field(default_factory=dict)
    mode: SolverMode = SolverMode.FIXED_POINT
    tol: float = Field(1e-6, ge=0.0)
    max_iter: int = Field(400, ge=1)
    damping: float = Field(0.5, gt=0.0, le=1.0)
    seed: int = Field(0, ge=0)
    output_dir: Optional[Path] = None
    input_path: Optional[Path] = Field(None, description="HF2D dump read by resolve/farfield.")
    origin_rule: str = Field("lattice", description="lattice | cell-average")

    # kernel
    r_range: Tuple[float, float] = (1e-6, 1e4)
    kernel_points: int = Field(1000, ge=2)

    # farfield / resolve
    annuli: Optional[List[Tuple[float, float]]] = None
    cesaro_radii: Optional[List[float]] = None
    theta_count: int = Field(256, ge=8)
    nonlinear: bool = Field(False, description="farfield: treat the dump as a solution u and trace Q|u|^{p-2}u.")

    # estimates
    scans: List[EstimateScan] = Field(default_factory=lambda: [EstimateScan.DYADIC])
    j_range: Tuple[int, int] = (3, 8)
    truncation_radii: List[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0])
    k_values: List[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16])
    p_values: List[float] = Field(default_factory=lambda: [6.0, 8.0, 12.0])
    family_sizes: List[int] = Field(default_factory=lambda: [4, 8, 16])
    dilations: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])

    # oracle
    a_bracket: Tuple[float, float] = (0.2, 3.0)
    r_max: float = Field(200.0, gt=0.0, description="Outer radius of the radial oracle.")

    @field_validator("q_preset")
    @classmethod
    def _known_preset(cls, name: str) -> str:
        if name not in Q_PRESETS:
            raise ValueError(f"unknown preset {name!r}; choose one of {', '.join(Q_PRESETS)}")
        return name

    @field_validator("origin_rule")
    @classmethod
    def _known_rule(cls, rule: str) -> str:
        if rule not in ("lattice", "cell-average"):
            raise ValueError("must be 'lattice' or 'cell-average'")
        return rule

    @field_validator("r_range", "a_bracket")
    @classmethod
    def _ordered_pair(cls, pair: Tuple[float, float]) -> Tuple[float, float]:
        if not 0.0 < pair[0] < pair[1]:
            raise ValueError("needs 0 < lower < upper")
        return pair

    @model_validator(mode="after")
    def _fits_grid(self) -> "ExperimentConfig":
        largest = 0.0
        if self.annuli:
            for r_in, r_out in self.annuli:
                if not 0.0 <= r_in < r_out:
                    raise ValueError("annuli: every annulus needs 0 <= r_in < r_out")
            largest = max(r_out for _, r_out in self.annuli)
        if self.cesaro_radii:
            largest = max(largest, max(self.cesaro_radii))
        if largest > self.grid.half_side:
            raise ValueError(f"grid: half side {self.grid.half_side:.4g} is smaller than radius {largest:.4g}")
        return self


# --- Run records ---

class ArtifactRecord(BaseModel):
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    config: Dict[str, Any]
    artifacts: List[ArtifactRecord] = Field(default_factory=list)
    status: str = "ok"
    exit_code: int = 0
    wall_clock_seconds: float = 0.0
    code_version: str = CODE_VERSION
    failure: Optional[Dict[str, Any]] = None
