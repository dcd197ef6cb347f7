"""Embedding network, growable classifier and the full model state."""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from fscil.exceptions import ContractError, DimensionError
from fscil.models.calibration import CalibrationParams
from fscil.models.optimizer import OptimizerState
from fscil.models.tensor import Tensor

PARAMETER_GROUPS = ("embedding", "classifier", "calibration")


def _uniform(rng: np.random.Generator, fan_in: int, shape: Sequence[int]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=tuple(shape))


class EmbeddingNet:
    """MLP embedding φ: ℝ^D → ℝ^d with rectifiers between layers.

    The last layer is linear so a single layer can represent the identity.
    """

    def __init__(self, widths: Sequence[int], weights: List[Tensor], biases: List[Tensor]):
        widths = list(widths)
        if len(widths) < 2:
            raise DimensionError("an embedding needs at least input and output widths")
        if len(weights) != len(widths) - 1 or len(biases) != len(weights):
            raise DimensionError(f"{len(weights)} layers do not fit widths {widths}")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise DimensionError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not fit widths {widths}"
                )
        self.widths = widths
        self.weights = weights
        self.biases = biases

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator) -> "EmbeddingNet":
        """Fan-in scaled uniform weights and biases."""
        widths = list(widths)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(Tensor(_uniform(rng, fan_in, (fan_in, fan_out)), requires_grad=True))
            biases.append(Tensor(_uniform(rng, fan_in, (fan_out,)), requires_grad=True))
        return cls(widths, weights, biases)

    @property
    def input_dim(self) -> int:
        """D."""
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        """d."""
        return self.widths[-1]

    def parameters(self) -> Dict[str, Tensor]:
        """Named weight and bias tensors."""
        params: Dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"embedding.{i}.weight"] = w
            params[f"embedding.{i}.bias"] = b
        return params

    def copy(self) -> "EmbeddingNet":
        """Independent copy with fresh gradient-tracked leaves."""
        return EmbeddingNet(
            self.widths,
            [Tensor(w.data, requires_grad=True) for w in self.weights],
            [Tensor(b.data, requires_grad=True) for b in self.biases],
        )


@dataclass
class Classifier:
    """Bias-free linear classifier W ∈ ℝ^{d×n}; column j scores class_ids[j]."""

    weights: Tensor
    class_ids: List[int]

    def __post_init__(self) -> None:
        self.class_ids = [int(c) for c in self.class_ids]
        if self.weights.ndim != 2 or self.weights.shape[1] != len(self.class_ids):
            raise DimensionError(
                f"classifier weights {self.weights.shape} do not match "
                f"{len(self.class_ids)} class ids"
            )
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ContractError("classifier class ids must be unique")

    @classmethod
    def initialize(
        cls, dim: int, class_ids: Sequence[int], rng: np.random.Generator
    ) -> "Classifier":
        """Fan-in scaled uniform columns."""
        weights = Tensor(_uniform(rng, dim, (dim, len(class_ids))), requires_grad=True)
        return cls(weights=weights, class_ids=list(class_ids))

    @property
    def dim(self) -> int:
        """Row dimension d."""
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        """Number of class columns."""
        return len(self.class_ids)

    def column_of(self, class_id: int) -> int:
        """Column index of a class."""
        try:
            return self.class_ids.index(int(class_id))
        except ValueError:
            raise ContractError(f"class {class_id} has no classifier column") from None

    def columns_for(self, labels: Iterable[int]) -> np.ndarray:
        """Map class labels to column indices."""
        lookup = {c: j for j, c in enumerate(self.class_ids)}
        try:
            return np.array([lookup[int(y)] for y in labels], dtype=np.int64)
        except KeyError as exc:
            raise ContractError(f"class {exc.args[0]} has no classifier column") from None

    def copy(self) -> "Classifier":
        """Independent copy with a fresh gradient-tracked weight leaf."""
        return Classifier(Tensor(self.weights.data, requires_grad=True), list(self.class_ids))


@dataclass
class ModelState:
    """Everything a checkpoint holds: φ, W, 𝒯 and optimizer state."""

    net: EmbeddingNet
    classifier: Classifier
    calibration: CalibrationParams
    base_class_ids: List[int]
    seed: int = 0
    pretrained: bool = False
    meta_trained: bool = False
    optimizer: Optional[OptimizerState] = None
    history: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.net.output_dim != self.classifier.dim:
            raise DimensionError(
                f"embedding outputs {self.net.output_dim} values but the classifier "
                f"expects {self.classifier.dim}"
            )
        if self.calibration.dim != self.net.output_dim:
            raise DimensionError("calibration dimension must equal the embedding dimension")

    def parameters(self, groups: Sequence[str] = PARAMETER_GROUPS) -> Dict[str, Tensor]:
        """Named parameters of the selected groups."""
        params: Dict[str, Tensor] = {}
        if "embedding" in groups:
            params.update(self.net.parameters())
        if "classifier" in groups:
            params["classifier.weight"] = self.classifier.weights
        if "calibration" in groups:
            params.update(self.calibration.parameters())
        return params

    def copy(self) -> "ModelState":
        """Deep copy; the optimizer state is not carried over."""
        return ModelState(
            net=self.net.copy(),
            classifier=self.classifier.copy(),
            calibration=self.calibration.copy(),
            base_class_ids=list(self.base_class_ids),
            seed=self.seed,
            pretrained=self.pretrained,
            meta_trained=self.meta_trained,
            history=list(self.history),
        )

    def fingerprint(self) -> Dict[str, bytes]:
        """Raw bytes of every parameter, for bit-level comparisons."""
        return {name: t.data.tobytes() for name, t in self.parameters().items()}
