from typing import Dict, List, Optional

from pydantic import BaseModel, Field


# --- Scan rows (one CSV line each) ---

class DyadicRow(BaseModel):
    j: int
    sup_norm: float = Field(description="‖Qʲ‖_∞")
    ratio: float = Field(description="worst ‖Qʲ∗f‖₂ / ‖f‖_{6/5} over the probes")


class TruncationRow(BaseModel):
    radius: float
    ratio: float = Field(description="worst ‖[1_{|x|>=R}Φ₁]∗f‖_p / ‖f‖_{p'}")


class EndpointRow(BaseModel):
    k: float
    sup_modulus: float = Field(description="sup |Φ∗f_k|")
    sup_real: float = Field(description="sup |Re Φ∗f_k|")
    l1_norm: float = Field(description="‖f_k‖₁ on the grid")
    flagged: bool = Field(False, description="bump narrower than 8 grid cells")


class BoundednessRow(BaseModel):
    p: float
    family_size: int
    worst_ratio: float


class VanishingRow(BaseModel):
    dilation: float
    concentration: float = Field(description="sup_y ∫_{B_1(y)} |v_s|^{p'}")
    phi1_form: float
    phi2_form: float


# --- Scan results ---

class DyadicScan(BaseModel):
    rows: List[DyadicRow]
    excluded: List[int] = Field(default_factory=list, description="indices whose annulus holds no sample")
    sup_slope: Optional[float] = Field(None, description="slope of log2 ‖Qʲ‖_∞ against j")
    ratio_slope: Optional[float] = Field(None, description="slope of log2 of the probe ratio against j")


class TruncationScan(BaseModel):
    p: float
    lambda_p: float = Field(description="1/2 - 3/p")
    rows: List[TruncationRow]
    exponent: Optional[float] = Field(None, description="fitted slope of log ratio against log R")
    flagged: bool = Field(False, description="p <= 6: no decay is predicted, sign check skipped")


class EndpointScan(BaseModel):
    rows: List[EndpointRow]
    bump_l1: float
    target_slope: float = Field(description="‖f‖₁ / (2π)")
    slope: Optional[float] = None
    real_slope: Optional[float] = None


class BoundednessScan(BaseModel):
    rows: List[BoundednessRow]
    growth: Dict[float, float] = Field(default_factory=dict,
                                       description="per p, worst ratio of the largest family over the next largest")
    stable: bool = Field(True, description="every growth stays within the stability tolerance")


class VanishingScan(BaseModel):
    p: float
    rows: List[VanishingRow]
