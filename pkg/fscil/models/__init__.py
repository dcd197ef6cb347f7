"""Domain records: tensors, datasets and model parameters."""

from fscil.models.tensor import Tape, Tensor, backward, get_tape, no_grad, use_tape
from fscil.models.gradcheck import grad_check
from fscil.models.dataset import Dataset, SessionStream
from fscil.models.calibration import CalibrationParams
from fscil.models.optimizer import OptimizerState
from fscil.models.network import Classifier, EmbeddingNet, ModelState

__all__ = [
    "Tape",
    "Tensor",
    "backward",
    "get_tape",
    "no_grad",
    "use_tape",
    "grad_check",
    "Dataset",
    "SessionStream",
    "CalibrationParams",
    "OptimizerState",
    "Classifier",
    "EmbeddingNet",
    "ModelState",
]
