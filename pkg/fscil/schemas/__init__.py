"""Pydantic schemas for configuration, checkpoints and reports."""

from fscil.schemas.checkpoint import CheckpointFile, TensorRecord
from fscil.schemas.config import (
    SCHEMA_VERSION,
    DatasetConfig,
    EvalConfig,
    FakeTaskSpec,
    FinetuneConfig,
    MetaConfig,
    ModelConfig,
    PretrainConfig,
    RunConfig,
    SplitSpec,
    TrainConfig,
)
from fscil.schemas.report import (
    AblationReport,
    AblationRow,
    EvalReport,
    TopPrediction,
    TrainLogEntry,
    SweepPoint,
    SweepReport,
    TrialsReport,
)

__all__ = [
    "SCHEMA_VERSION",
    "AblationReport",
    "AblationRow",
    "CheckpointFile",
    "DatasetConfig",
    "EvalConfig",
    "EvalReport",
    "FakeTaskSpec",
    "FinetuneConfig",
    "MetaConfig",
    "ModelConfig",
    "PretrainConfig",
    "RunConfig",
    "SplitSpec",
    "SweepPoint",
    "SweepReport",
    "TensorRecord",
    "TopPrediction",
    "TrainConfig",
    "TrainLogEntry",
    "TrialsReport",
]
