"""Pydantic schemas for the run configuration file."""

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

SCHEMA_VERSION = 1

Method = Literal["limit", "proto", "cosine", "finetune", "kd"]
DropoutPosition = Literal["pre_norm", "post_norm", "branch"]


class SplitSpec(BaseModel):
    """How classes are divided into the base session and few-shot sessions."""

    base_class_count: int = Field(40, ge=1, description="Classes in the base session")
    way: int = Field(5, ge=1, description="New classes per incremental session (N)")
    shot: int = Field(5, ge=1, description="Training instances per new class (K)")
    session_count: int = Field(4, ge=0, description="Incremental sessions (B)")
    test_per_class: int = Field(15, ge=1, description="Held-out test instances per class")
    seed: Optional[int] = Field(None, description="Class shuffle and test carving seed")
    instance_seed: Optional[int] = Field(
        None, description="K-shot draw seed; defaults to seed"
    )

    class Config:
        extra = "forbid"

    @property
    def incremental_class_count(self) -> int:
        """N·B classes arriving after the base session."""
        return self.way * self.session_count


class FakeTaskSpec(BaseModel):
    """Shape of the multi-phase fake-incremental tasks sampled for meta-training."""

    phases: int = Field(2, ge=1, description="Fake phases C")
    fake_way: int = Field(5, ge=1, description="Classes per fake phase")
    fake_shot: int = Field(5, ge=1, description="Support instances per fake class")
    query_shot: int = Field(10, ge=1, description="Query instances per seen class")

    class Config:
        extra = "forbid"


class PretrainConfig(BaseModel):
    """Cross-entropy pre-training on the base session."""

    lr: float = Field(0.01, gt=0, description="Initial learning rate")
    momentum: float = Field(0.9, ge=0, lt=1)
    epochs: int = Field(100, ge=0)
    batch_size: int = Field(128, ge=1)
    decay_factor: float = Field(0.1, gt=0, le=1, description="Multiplier applied at each milestone")
    decay_epochs: List[int] = Field(
        default_factory=lambda: [60, 80], description="Epochs at which the rate is decayed"
    )
    divergence_factor: float = Field(
        10.0, gt=1, description="Epoch loss above this multiple of the first epoch's is divergence"
    )

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_milestones(self) -> "PretrainConfig":
        """Milestones must be positive and increasing."""
        if any(e < 1 for e in self.decay_epochs) or self.decay_epochs != sorted(set(self.decay_epochs)):
            raise ValueError("decay_epochs must be strictly increasing positive epochs")
        return self


class MetaConfig(BaseModel):
    """Fake-task meta-training of embedding, classifier and calibration."""

    lr: float = Field(0.0002, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    decay_factor: float = Field(0.5, gt=0, le=1)
    decay_every_iters: int = Field(1000, ge=1)
    iterations: int = Field(2000, ge=0)
    fake_task: FakeTaskSpec = Field(default_factory=FakeTaskSpec)
    episodes_per_step: int = Field(1, ge=1, description="Fake sequences averaged per step")
    prefetch: int = Field(0, ge=0, description="Bounded queue size for a sampling thread")
    update_backbone: bool = Field(True, description="Also optimize embedding and classifier")
    eval_episodes: int = Field(20, ge=0, description="Held-out fake tasks for accuracy checks")
    log_every: int = Field(100, ge=1)

    class Config:
        extra = "forbid"


class FinetuneConfig(BaseModel):
    """SGD on a few-shot session, used by the finetune and kd baselines."""

    lr: float = Field(0.01, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    epochs: int = Field(20, ge=0)
    batch_size: int = Field(25, ge=1)
    clip_norm: Optional[float] = Field(5.0, gt=0, description="Global gradient-norm cap")
    match_norm: bool = Field(
        True, description="Rescale new prototype columns to the mean classifier column norm"
    )

    class Config:
        extra = "forbid"


class TrainConfig(BaseModel):
    """All optimization settings."""

    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    meta: MetaConfig = Field(default_factory=MetaConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)
    kd_lambda: float = Field(0.5, ge=0, le=1, description="Distillation weight")
    seed: Optional[int] = None

    class Config:
        extra = "forbid"


class ModelConfig(BaseModel):
    """Embedding network and calibration module sizes."""

    hidden: List[int] = Field(default_factory=lambda: [64, 64])
    embed_dim: int = Field(32, ge=1, description="Embedding dimension d")
    attn_dim: int = Field(64, ge=1, description="Attention projection dimension d'")
    dropout: float = Field(0.5, ge=0, lt=1)
    dropout_position: DropoutPosition = "pre_norm"
    layer_norm_eps: float = Field(1e-5, gt=0)
    cosine_temperature: float = Field(16.0, gt=0)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_hidden(self) -> "ModelConfig":
        """Hidden widths must be positive."""
        if any(width < 1 for width in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        return self


class DatasetConfig(BaseModel):
    """Where features come from and how they are split."""

    source: Literal["synth", "csv"] = "synth"
    csv_path: Optional[Path] = None
    num_classes: int = Field(60, ge=1)
    dim: int = Field(64, ge=1, description="Feature dimension D")
    per_class: int = Field(60, ge=1)
    spread: float = Field(1.0, ge=0, description="Noise scale around class means")
    split: SplitSpec = Field(default_factory=SplitSpec)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_source(self) -> "DatasetConfig":
        """CSV sources need an existing file; synthetic ones a feasible split."""
        if self.source == "csv":
            if self.csv_path is None:
                raise ValueError("csv_path is required when source is 'csv'")
            if not self.csv_path.exists():
                raise ValueError(f"csv_path {self.csv_path} does not exist")
        else:
            needed = self.split.base_class_count + self.split.incremental_class_count
            if needed > self.num_classes:
                raise ValueError(
                    f"split needs {needed} classes but num_classes is {self.num_classes}"
                )
            if self.split.shot + self.split.test_per_class > self.per_class:
                raise ValueError("per_class must cover shot + test_per_class")
        return self


class EvalConfig(BaseModel):
    """Incremental evaluation switches and output location."""

    prototype: bool = Field(True, description="Grow the classifier with prototypes")
    calibration: bool = Field(True, description="Score with calibrated logits")
    out_dir: Path = Path("runs")
    top_k: int = Field(5, ge=1)

    class Config:
        extra = "forbid"


class RunConfig(BaseModel):
    """One canonical configuration per run."""

    schema_version: int = SCHEMA_VERSION
    seed: int = 1
    method: Method = "limit"
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    class Config:
        extra = "forbid"

    @model_validator(mode="after")
    def check_run(self) -> "RunConfig":
        """Fill derived seeds and check cross-section invariants."""
        if self.dataset.split.seed is None:
            self.dataset.split.seed = self.seed
        if self.dataset.split.instance_seed is None:
            self.dataset.split.instance_seed = self.dataset.split.seed
        if self.train.seed is None:
            self.train.seed = self.seed
        fake = self.train.meta.fake_task
        if fake.fake_way * fake.phases >= self.dataset.split.base_class_count:
            raise ValueError(
                "train.meta.fake_task: fake_way * phases must be smaller than "
                "dataset.split.base_class_count"
            )
        return self
