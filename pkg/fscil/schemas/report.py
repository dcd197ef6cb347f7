"""Pydantic schemas for training logs and evaluation reports."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from fscil.schemas.config import SCHEMA_VERSION


class TrainLogEntry(BaseModel):
    """One logged step of pre-training, meta-training or session finetuning."""

    stage: str = Field(..., description="pretrain, meta or finetune")
    iteration: int
    lr: float
    loss: float
    accuracy: Optional[float] = Field(None, description="Batch accuracy in percent")


class TopPrediction(BaseModel):
    """Top-k classes and probabilities for one final-session test instance."""

    label: int
    classes: List[int]
    probabilities: List[float]


class EvalReport(BaseModel):
    """Result of one incremental evaluation run."""

    schema_version: int = SCHEMA_VERSION
    seed: int
    method: str
    session_acc: List[float] = Field(..., description="Top-1 accuracy per session, percent")
    pd: float = Field(..., description="First minus last session accuracy")
    base_acc: float = Field(..., description="Final-session accuracy on base classes")
    inc_acc: float = Field(..., description="Final-session accuracy on incremental classes")
    harmonic: float
    class_order: List[int] = Field(..., description="Row/column order of the confusion matrix")
    confusion: List[List[int]]
    per_session_class_counts: List[Dict[int, int]] = Field(
        ..., description="Test instances per class in each session's test set"
    )
    top_predictions: List[TopPrediction] = Field(default_factory=list)


class AblationRow(BaseModel):
    """One component combination of the ablation grid."""

    name: str
    prototype: bool
    calibration: bool
    meta_1: bool
    meta_c: bool
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = Field(None, description="Failure message when status is failed")
    session_acc: List[float] = Field(default_factory=list)
    pd: Optional[float] = None
    final_std: float = 0.0


class AblationReport(BaseModel):
    """Session accuracies of every ablation variant."""

    schema_version: int = SCHEMA_VERSION
    seed: int
    trials: int
    rows: List[AblationRow]


class TrialsReport(BaseModel):
    """Session accuracies averaged over several K-shot draws."""

    schema_version: int = SCHEMA_VERSION
    seed: int
    method: str
    instance_seeds: List[int]
    session_acc: List[List[float]] = Field(..., description="One row per trial")
    mean_session_acc: List[float]
    final_mean: float
    final_std: float


class SweepPoint(BaseModel):
    """Result of one setting of a hyper-parameter sweep."""

    setting: Dict[str, int] = Field(..., description="Swept parameters and their values")
    status: Literal["ok", "skipped", "failed"] = "ok"
    error: Optional[str] = None
    session_acc: List[float] = Field(default_factory=list, description="Trial-mean accuracy per session")
    pd: Optional[float] = None
    final_mean: Optional[float] = None
    final_std: Optional[float] = None


class SweepReport(BaseModel):
    """Final accuracy across values of one hyper-parameter family."""

    schema_version: int = SCHEMA_VERSION
    seed: int
    kind: str = Field(..., description="fake_way_shot, phases or shot")
    trials: int
    points: List[SweepPoint]
