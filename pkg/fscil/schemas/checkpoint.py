"""Pydantic schema of the JSON checkpoint file."""

from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from fscil.schemas.config import SCHEMA_VERSION


class TensorRecord(BaseModel):
    """A float64 array stored as its shape and row-major values."""

    shape: List[int]
    values: List[float]

    class Config:
        extra = "forbid"


class CalibrationRecord(BaseModel):
    """Non-tensor settings of the calibration module."""

    dropout_p: float
    dropout_position: str
    eps: float

    class Config:
        extra = "forbid"


class OptimizerRecord(BaseModel):
    """Momentum buffers of the last training stage."""

    iteration: int
    velocity: Dict[str, TensorRecord] = Field(default_factory=dict)

    class Config:
        extra = "forbid"


class CheckpointFile(BaseModel):
    """Full model state: embedding, classifier, calibration and flags."""

    schema_version: int = SCHEMA_VERSION
    seed: int
    widths: List[int] = Field(..., description="Embedding layer widths, input first")
    class_ids: List[int] = Field(..., description="Class of each classifier column")
    base_class_ids: List[int]
    calibration: CalibrationRecord
    tensors: Dict[str, TensorRecord]
    pretrained: bool = False
    meta_trained: bool = False
    history: List[str] = Field(default_factory=list)
    optimizer: Optional[OptimizerRecord] = None

    class Config:
        extra = "forbid"
