"""Pydantic request/response schemas of the session service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class SessionCreated(BaseModel):
    id: str


class FitRequest(BaseModel):
    grid: int = Field(default=64, ge=1, le=512)
    mode: Literal["smooth", "standard", "rgb_only"] = "smooth"
    iters: int = Field(default=500, ge=1, le=20000)
    seed: int = 0


class FitReportOut(BaseModel):
    final_mse: float
    final_psnr: float
    iterations: int
    wall_time_s: float
    loss_history: list[float]


class HueAdjust(BaseModel):
    theta: float = Field(ge=0.0, le=360.0)
    alpha: float = Field(ge=0.0, le=1.0)


class SatAdjust(BaseModel):
    sigma: float = Field(ge=-1.0, le=1.0)
    alpha: float = Field(ge=0.0, le=1.0)


class ValAdjust(BaseModel):
    v_min: float
    phis: list[float]
    alpha: float = Field(ge=0.0, le=1.0)


class AdjustRequest(BaseModel):
    hue: Optional[HueAdjust] = None
    sat: Optional[SatAdjust] = None
    val: Optional[ValAdjust] = None


class SessionInfo(BaseModel):
    id: str
    width: int
    height: int
    has_gt: bool
    fitted: bool
    report: Optional[FitReportOut] = None
    adjustments: Optional[dict] = None


class ErrorBody(BaseModel):
    code: int
    message: str
