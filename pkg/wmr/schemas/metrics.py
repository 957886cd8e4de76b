"""Pydantic schemas for evaluation results and comparison rows."""

import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, field_validator

METRIC_COLUMNS = ["E_vel", "E_ang", "E_recon", "M_terrain", "M_reward"]


class RunStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


class EpisodeMetrics(BaseModel):
    """Episode-averaged metrics of one evaluation; E_recon is NaN without an estimator."""

    variant: str
    seed: int
    E_vel: float
    E_ang: float
    E_recon: float
    M_terrain: float
    M_reward: float

    @field_validator("E_vel", "E_ang", "E_recon")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if not math.isnan(v) and v < 0:
            raise ValueError("tracking and reconstruction errors are >= 0")
        return v

    def row(self) -> dict:
        return self.model_dump()


class ReconFieldError(BaseModel):
    field: str
    mse: float


class PayloadEstimate(BaseModel):
    payload: float
    predicted: float
    abs_error: float


class ComparisonRow(BaseModel):
    variant: str
    seed: int
    status: RunStatus = RunStatus.OK
    error: Optional[str] = None
    E_vel: float = math.nan
    E_ang: float = math.nan
    E_recon: float = math.nan
    M_terrain: float = math.nan
    M_reward: float = math.nan
    breakdown: dict[str, float] = Field(default_factory=dict)
