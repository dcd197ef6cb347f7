"""Embedding, prototype and classifier operations."""

import logging
from typing import Dict, Sequence, Union

import numpy as np

from fscil.exceptions import ContractError, DimensionError
from fscil.models import functional as F
from fscil.models.dataset import Dataset
from fscil.models.network import Classifier, EmbeddingNet
from fscil.models.tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


def embed(net: EmbeddingNet, features: Union[Tensor, np.ndarray]) -> Tensor:
    """φ(x) for a batch of feature rows."""
    x = F.as_tensor(features)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(
            f"embedding expects rows of {net.input_dim} features, got shape {x.shape}"
        )
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = F.add(F.matmul(h, w), b)
        if i < last:
            h = F.relu(h)
    return h


def compute_prototypes(support: Dataset, net: EmbeddingNet) -> Dict[int, Tensor]:
    """Mean embedding per class present in the support set.

    Differentiable with respect to φ when gradients are enabled.
    """
    if len(support) == 0:
        raise ContractError("cannot compute prototypes of an empty support set")
    embeddings = embed(net, Tensor.wrap(support.features))
    return {
        c: F.mean(F.take(embeddings, support.indices_of(c), axis=0), axis=0)
        for c in support.classes
    }


def select_columns(classifier: Classifier, class_ids: Sequence[int]) -> Classifier:
    """Classifier restricted to the given classes, in that order."""
    columns = [classifier.column_of(c) for c in class_ids]
    return Classifier(F.take(classifier.weights, columns, axis=1), list(class_ids))


def replace_classifier(
    previous: Classifier,
    prototypes: Dict[int, Tensor],
    phase_classes: Sequence[int],
) -> Classifier:
    """Write prototypes into the columns of phase_classes.

    Classes already present keep their column position and get the prototype
    as new weights; the rest are appended in phase_classes order. Columns of
    other classes are carried over unchanged. Gradients flow to both the
    previous weights and the prototypes.
    """
    phase_classes = [int(c) for c in phase_classes]
    missing = [c for c in phase_classes if c not in prototypes]
    if missing:
        raise ContractError(f"no prototype for classes {missing}")
    if not phase_classes:
        return Classifier(previous.weights, list(previous.class_ids))

    width = previous.width
    incoming = F.stack([prototypes[c] for c in phase_classes], axis=1)
    joined = F.concat([previous.weights, incoming], axis=1)
    position = {c: width + k for k, c in enumerate(phase_classes)}

    columns = [position.get(c, j) for j, c in enumerate(previous.class_ids)]
    class_ids = list(previous.class_ids)
    existing = set(class_ids)
    for c in phase_classes:
        if c not in existing:
            columns.append(position[c])
            class_ids.append(c)
    return Classifier(F.take(joined, columns, axis=1), class_ids)


def augment_classifier(
    classifier: Classifier,
    prototypes: Dict[int, Tensor],
    new_class_ids: Sequence[int],
) -> Classifier:
    """Append prototype columns for unseen classes without recording gradients."""
    new_class_ids = [int(c) for c in new_class_ids]
    duplicates = [c for c in new_class_ids if c in classifier.class_ids]
    if duplicates or len(set(new_class_ids)) != len(new_class_ids):
        raise ContractError(f"classes {duplicates or new_class_ids} already have columns")
    missing = [c for c in new_class_ids if c not in prototypes]
    if missing:
        raise ContractError(f"no prototype for classes {missing}")

    with no_grad():
        blocks = [classifier.weights.data]
        blocks.extend(prototypes[c].data.reshape(-1, 1) for c in new_class_ids)
        weights = np.concatenate(blocks, axis=1)
    logger.debug(f"Augmented classifier from {classifier.width} to {weights.shape[1]} columns")
    return Classifier(Tensor(weights), classifier.class_ids + new_class_ids)


def match_column_norm(classifier: Classifier, prototypes: Dict[int, Tensor]) -> Dict[int, Tensor]:
    """Rescale prototypes to the mean ℓ2 norm of the classifier's columns.

    Directions are kept; zero prototypes and empty classifiers are returned
    unchanged. No gradients are recorded.
    """
    if classifier.width == 0:
        return dict(prototypes)
    target = float(np.mean(np.linalg.norm(classifier.weights.data, axis=0)))
    scaled: Dict[int, Tensor] = {}
    for c, proto in prototypes.items():
        norm = float(np.linalg.norm(proto.data))
        scaled[c] = Tensor(proto.data * (target / norm)) if norm > 0 else Tensor(proto.data)
    return scaled


def raw_logits(classifier: Classifier, embeddings: Tensor) -> Tensor:
    """Wᵀφ(x) for every row."""
    return F.matmul(embeddings, classifier.weights)


def cosine_logits(classifier: Classifier, embeddings: Tensor, temperature: float) -> Tensor:
    """Temperature-scaled cosine similarity between embeddings and columns."""
    w = classifier.weights.data
    e = embeddings.data
    w_unit = w / np.maximum(np.linalg.norm(w, axis=0, keepdims=True), 1e-12)
    e_unit = e / np.maximum(np.linalg.norm(e, axis=1, keepdims=True), 1e-12)
    return Tensor.wrap(temperature * (e_unit @ w_unit))
