"""Saving and loading model states as JSON checkpoints."""

import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np
from pydantic import ValidationError

from fscil.exceptions import ConfigError, ContractError
from fscil.models.calibration import CalibrationParams
from fscil.models.network import Classifier, EmbeddingNet, ModelState
from fscil.models.optimizer import OptimizerState
from fscil.models.tensor import Tensor
from fscil.schemas.checkpoint import (
    CalibrationRecord,
    CheckpointFile,
    OptimizerRecord,
    TensorRecord,
)
from fscil.schemas.config import SCHEMA_VERSION

logger = logging.getLogger(__name__)


def _record(array: np.ndarray) -> TensorRecord:
    return TensorRecord(shape=list(array.shape), values=array.reshape(-1).tolist())


def _array(record: TensorRecord, name: str) -> np.ndarray:
    values = np.array(record.values, dtype=np.float64)
    expected = int(np.prod(record.shape)) if record.shape else 1
    if values.size != expected:
        raise ContractError(f"checkpoint tensor {name} has {values.size} values for shape {record.shape}")
    return values.reshape(record.shape)


def to_checkpoint(state: ModelState) -> CheckpointFile:
    """Serializable form of a model state."""
    optimizer = None
    if state.optimizer is not None:
        optimizer = OptimizerRecord(
            iteration=state.optimizer.iteration,
            velocity={name: _record(v) for name, v in sorted(state.optimizer.velocity.items())},
        )
    return CheckpointFile(
        seed=state.seed,
        widths=list(state.net.widths),
        class_ids=list(state.classifier.class_ids),
        base_class_ids=list(state.base_class_ids),
        calibration=CalibrationRecord(
            dropout_p=state.calibration.dropout_p,
            dropout_position=state.calibration.dropout_position,
            eps=state.calibration.eps,
        ),
        tensors={name: _record(t.data) for name, t in state.parameters().items()},
        pretrained=state.pretrained,
        meta_trained=state.meta_trained,
        history=list(state.history),
        optimizer=optimizer,
    )


def from_checkpoint(checkpoint: CheckpointFile) -> ModelState:
    """Rebuild a model state with gradient-tracked parameters."""
    if checkpoint.schema_version != SCHEMA_VERSION:
        raise ConfigError(
            f"checkpoint schema_version {checkpoint.schema_version} is not supported "
            f"(expected {SCHEMA_VERSION})",
            fields=["schema_version"],
        )
    tensors: Dict[str, Tensor] = {}
    for name, record in checkpoint.tensors.items():
        tensors[name] = Tensor(_array(record, name), requires_grad=True)

    def take(name: str) -> Tensor:
        try:
            return tensors[name]
        except KeyError:
            raise ContractError(f"checkpoint is missing tensor {name}") from None

    layers = len(checkpoint.widths) - 1
    net = EmbeddingNet(
        checkpoint.widths,
        [take(f"embedding.{i}.weight") for i in range(layers)],
        [take(f"embedding.{i}.bias") for i in range(layers)],
    )
    calibration = CalibrationParams(
        w_q=take("calibration.w_q"),
        w_k=take("calibration.w_k"),
        w_v=take("calibration.w_v"),
        w_fc=take("calibration.w_fc"),
        gamma=take("calibration.gamma"),
        beta=take("calibration.beta"),
        dropout_p=checkpoint.calibration.dropout_p,
        dropout_position=checkpoint.calibration.dropout_position,
        eps=checkpoint.calibration.eps,
    )
    optimizer = None
    if checkpoint.optimizer is not None:
        optimizer = OptimizerState(
            velocity={n: _array(r, n) for n, r in checkpoint.optimizer.velocity.items()},
            iteration=checkpoint.optimizer.iteration,
        )
    return ModelState(
        net=net,
        classifier=Classifier(take("classifier.weight"), checkpoint.class_ids),
        calibration=calibration,
        base_class_ids=list(checkpoint.base_class_ids),
        seed=checkpoint.seed,
        pretrained=checkpoint.pretrained,
        meta_trained=checkpoint.meta_trained,
        optimizer=optimizer,
        history=list(checkpoint.history),
    )


def save_checkpoint(state: ModelState, path: Union[str, Path]) -> Path:
    """Write the state as JSON; equal states produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_checkpoint(state).model_dump_json(indent=1), encoding="utf-8")
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> ModelState:
    """Read a checkpoint written by save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"checkpoint {path} does not exist", fields=["checkpoint"])
    try:
        checkpoint = CheckpointFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        fields = [".".join(str(p) for p in err["loc"]) for err in exc.errors()]
        raise ConfigError(f"checkpoint {path} is malformed", fields=fields) from None
    state = from_checkpoint(checkpoint)
    logger.info(f"Loaded checkpoint from {path} ({state.classifier.width} classes)")
    return state
