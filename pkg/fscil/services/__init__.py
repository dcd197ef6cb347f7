"""Data, training and evaluation services."""

from fscil.services.calibration_service import calibrate, calibrated_logits, self_attend
from fscil.services.checkpoint_service import load_checkpoint, save_checkpoint
from fscil.services.dataset_service import (
    generate_gaussian_mixture,
    load_feature_csv,
    save_feature_csv,
    split_sessions,
)
from fscil.services.evaluation_service import EvalOptions, run_incremental, run_trials
from fscil.services.network_service import (
    augment_classifier,
    compute_prototypes,
    embed,
    replace_classifier,
)
from fscil.services.sampler_service import FakeTaskSequence, sample_fake_tasks
from fscil.services.training_service import (
    finetune_incremental,
    kd_incremental,
    meta_train,
    pretrain,
)

__all__ = [
    "EvalOptions",
    "FakeTaskSequence",
    "augment_classifier",
    "calibrate",
    "calibrated_logits",
    "compute_prototypes",
    "embed",
    "finetune_incremental",
    "generate_gaussian_mixture",
    "kd_incremental",
    "load_checkpoint",
    "load_feature_csv",
    "meta_train",
    "pretrain",
    "replace_classifier",
    "run_incremental",
    "run_trials",
    "sample_fake_tasks",
    "save_checkpoint",
    "save_feature_csv",
    "self_attend",
    "split_sessions",
]
