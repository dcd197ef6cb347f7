"""Labeled feature datasets and the FSCIL session stream."""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np

from fscil.exceptions import ContractError, DimensionError


@dataclass(frozen=True)
class Dataset:
    """Feature vectors with integer class labels in [0, num_classes)."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise DimensionError(f"features must be n×D, got shape {features.shape}")
        if features.shape[0] != labels.size:
            raise DimensionError(
                f"{features.shape[0]} feature rows but {labels.size} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")
        features.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        """Feature dimension D."""
        return int(self.features.shape[1])

    @property
    def classes(self) -> List[int]:
        """Sorted labels that have at least one instance."""
        return sorted(int(c) for c in np.unique(self.labels))

    def indices_of(self, class_id: int) -> np.ndarray:
        """Row indices of one class, in dataset order."""
        return np.flatnonzero(self.labels == class_id)

    def class_counts(self) -> Dict[int, int]:
        """Instances per present class."""
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows selected by index, keeping the label space."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            metadata=dict(self.metadata),
        )

    def restrict(self, class_ids: Sequence[int]) -> "Dataset":
        """Rows whose label is one of class_ids."""
        mask = np.isin(self.labels, np.asarray(list(class_ids), dtype=np.int64))
        return self.subset(np.flatnonzero(mask))


@dataclass(frozen=True)
class SessionStream:
    """One base session followed by B few-shot sessions with cumulative test sets.

    ``session_classes[0]`` is Y₀ and ``session_classes[b]`` is Y_b;
    ``test_sets[b]`` covers exactly Y₀ ∪ … ∪ Y_b.
    """

    base: Dataset
    sessions: List[Dataset]
    test_sets: List[Dataset]
    session_classes: List[List[int]]
    class_order: List[int]
    way: int
    shot: int

    @property
    def session_count(self) -> int:
        """Number of incremental sessions B."""
        return len(self.sessions)

    @property
    def base_class_count(self) -> int:
        """|Y₀|."""
        return len(self.session_classes[0])

    def seen_classes(self, session: int) -> List[int]:
        """Y₀ ∪ … ∪ Y_session in arrival order."""
        seen: List[int] = []
        for classes in self.session_classes[: session + 1]:
            seen.extend(classes)
        return seen
