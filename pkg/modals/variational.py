from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from modals.field import Grid, GridField

# --- Coefficient Q ---

class CoefficientClass(str, Enum):
    DECAYING = "decaying"
    PERIODIC = "periodic"
    COMPACT = "compactly-supported"


class CoefficientClosure(BaseModel):
    """Analytic recipe for Q, enough to regenerate it on any grid or patch."""
    model_config = ConfigDict(frozen=True)

    preset: str = Field(description="gaussian | cosine-lattice | disc")
    params: Dict[str, float] = Field(default_factory=dict)


class Coefficient(BaseModel):
    """The weight Q >= 0 sampled on a grid."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    samples: GridField
    kind: CoefficientClass
    closure: CoefficientClosure
    period: Tuple[float, float] = (1.0, 1.0)

    @model_validator(mode="after")
    def _check_samples(self) -> "Coefficient":
        q = self.samples.samples
        if np.max(np.abs(q.imag)) > 0.0:
            raise ValueError("Q must be real")
        if np.min(q.real) < 0.0:
            raise ValueError("Q must be nonnegative")
        if self.kind is CoefficientClass.PERIODIC:
            grid = self.samples.grid
            cells = self.period[0] / grid.h
            if abs(cells - round(cells)) > 1e-9 or round(cells) >= grid.n:
                raise ValueError("periodic Q needs a grid spacing that divides the period")
            k = int(round(cells))
            q = q.real
            drift = max(np.max(np.abs(q[:, k:] - q[:, :-k])), np.max(np.abs(q[k:, :] - q[:-k, :])))
            if drift > 1e-12 * max(1.0, float(np.max(q))):
                raise ValueError(f"periodic Q is not lattice invariant on this grid (drift {drift:.2e})")
        return self

    @property
    def values(self) -> np.ndarray:
        return self.samples.samples.real

    def root(self, p: float) -> np.ndarray:
        """Q^{1/p} on the grid."""
        return self.values ** (1.0 / p)


class SourcePatch(BaseModel):
    """
    A refined copy of the coarse window where Q is not negligible. Coarse sample
    (rows[0] + i, cols[0] + j) is fine sample (i·refine, j·refine).
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    rows: Tuple[int, int]
    cols: Tuple[int, int]
    refine: int = Field(ge=2)
    fine: Grid
    q: np.ndarray = Field(description="Q sampled from its closure on the fine grid.")


# --- Dual variable ---

class DualState(BaseModel):
    """A dual density v in L^{p'} with its exponent pair."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    v: GridField
    p: float = Field(ge=6.0)

    @model_validator(mode="after")
    def _check_real(self) -> "DualState":
        if not self.v.is_real(tol=1e-12):
            raise ValueError("the dual variable must be real")
        return self

    @property
    def p_dual(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def samples(self) -> np.ndarray:
        return self.v.samples.real

    def with_samples(self, samples: np.ndarray) -> "DualState":
        return DualState(v=self.v.with_samples(samples), p=self.p)


class SubspaceConstruction(BaseModel):
    """m disjoint small balls in a dense part of {Q > 0} with one positive bump each."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    m: int = Field(ge=1)
    delta: float = Field(gt=0, lt=1)
    x0: Tuple[float, float]
    centers: List[Tuple[float, float]]
    radii: List[float]
    bumps: List[GridField] = Field(description="One local patch per ball.")
    psi_star_inner: float = Field(description="Ψ*(σ^m) = inf of Re Φ on B_{σ^m}.")
    psi_star_outer: float = Field(description="Ψ_*(σ) = sup of |Re Φ| outside B_σ.")
    shrink_steps: int = 0

    @property
    def sigma(self) -> float:
        return self.delta / (4.0 * np.sqrt(self.m))

    @property
    def tau(self) -> float:
        return 0.5 * self.sigma ** self.m

    @property
    def psi_margin(self) -> float:
        return self.psi_star_inner - (self.m - 1) * self.psi_star_outer

    @model_validator(mode="after")
    def _check_balls(self) -> "SubspaceConstruction":
        if not (len(self.centers) == len(self.radii) == len(self.bumps) == self.m):
            raise ValueError("need exactly m centers, radii and bumps")
        if any(r <= 0 or r > self.tau * (1 + 1e-12) for r in self.radii):
            raise ValueError("each ball radius must lie in (0, τ]")
        for i in range(self.m):
            for j in range(i):
                gap = np.hypot(self.centers[i][0] - self.centers[j][0],
                               self.centers[i][1] - self.centers[j][1]) - self.radii[i] - self.radii[j]
                if gap < self.sigma * (1 - 1e-12):
                    raise ValueError(f"balls {j} and {i} are closer than σ")
        if self.psi_margin <= 0:
            raise ValueError("Ψ*(σ^m) > (m-1)Ψ_*(σ) does not hold")
        return self


# --- Solver diagnostics ---

class SolveStatus(str, Enum):
    CONVERGED = "converged"
    TRIVIAL = "trivial"
    DIVERGED = "diverged"
    MAX_ITER = "max-iterations"
    NOT_POSITIVE = "nonpositive-form"
    OSCILLATING = "oscillating-norm"
    VANISHING = "vanishing-sequence"


class Concentration(BaseModel):
    radius: float
    zeta: float
    center: Tuple[float, float]


class SolveReport(BaseModel):
    """Diagnostics of one nonlinear solve; value object safe to pass around and to dump."""
    status: SolveStatus
    method: str
    p: float
    tolerance: float
    iterations: int = 0
    residual_history: List[float] = Field(default_factory=list)
    final_residual: Optional[float] = None
    level: Optional[float] = Field(None, description="Mountain-pass level candidate c.")
    v_norm: Optional[float] = Field(None, description="‖v‖_{p'}")
    u_norm: Optional[float] = Field(None, description="‖u‖_p")
    euler_defect: Optional[float] = None
    concentration: List[Concentration] = Field(default_factory=list)
    damping: Optional[float] = None
    backend: Dict[str, Any] = Field(default_factory=dict)
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status in (SolveStatus.CONVERGED, SolveStatus.TRIVIAL)

    @model_validator(mode="after")
    def _check_success(self) -> "SolveReport":
        if self.status is SolveStatus.CONVERGED:
            if self.final_residual is None or self.final_residual > self.tolerance:
                raise ValueError("a converged report needs a residual below tolerance")
            if self.level is not None and self.level <= 0:
                raise ValueError("a converged nontrivial solve needs c > 0")
        return self


class GramMatrix(BaseModel):
    """G_ij = ∫ z_i K z_j for the bumps of a SubspaceConstruction."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    min_eigenvalue: float
    lower_bound: float = Field(description="(Ψ*(σ^m) - (m-1)Ψ_*(σ))·min_i (∫Q^{1/p} z_i)²")
    masses: List[float] = Field(description="∫Q^{1/p} z_i per bump")

    @model_validator(mode="after")
    def _check_symmetric(self) -> "GramMatrix":
        g = self.matrix
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError("Gram matrix must be square")
        if not np.allclose(g, g.T, rtol=1e-10, atol=0.0):
            raise ValueError("Gram matrix must be symmetric")
        return self
