"""Synthetic data generation, feature CSV I/O and FSCIL session splitting."""

import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from fscil.exceptions import CapacityError, ContractError, ParseError
from fscil.models.dataset import Dataset, SessionStream
from fscil.schemas.config import SplitSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def generate_gaussian_mixture(
    num_classes: int,
    dim: int,
    per_class: int,
    spread: float,
    seed: int,
) -> Dataset:
    """Draw per_class instances around a unit-scale Gaussian mean for every class."""
    if num_classes < 1 or dim < 1 or per_class < 1:
        raise ContractError("class count, dimension and per-class count must be >= 1")
    if spread < 0:
        raise ContractError(f"spread must be non-negative, got {spread}")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((num_classes, dim))
    noise = rng.standard_normal((num_classes, per_class, dim))
    features = (means[:, None, :] + spread * noise).reshape(num_classes * per_class, dim)
    labels = np.repeat(np.arange(num_classes), per_class)
    return Dataset(
        features=features,
        labels=labels,
        num_classes=num_classes,
        metadata={
            "source": "synth",
            "seed": seed,
            "label_map": {i: i for i in range(num_classes)},
        },
    )


def label_map_path(path: PathLike) -> Path:
    """Sidecar file holding the original-to-dense label mapping."""
    path = Path(path)
    return path.with_name(path.stem + ".labels.json")


def _data_lines(path: Path) -> Tuple[List[int], List[str]]:
    """Physical line numbers and text of the non-blank, non-comment lines."""
    numbered = [
        (line_no, line)
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    return [n for n, _ in numbered], [line for _, line in numbered]


def load_feature_csv(path: PathLike) -> Dataset:
    """Read ``label,f1,...,fD`` rows and remap labels to a dense 0-based range.

    Blank lines and lines starting with ``#`` are skipped. The mapping from
    original to dense labels is recorded in ``metadata["label_map"]``.
    """
    path = Path(path)
    line_numbers, lines = _data_lines(path)
    if not lines:
        raise ParseError(f"{path} contains no data rows", 1)

    columns = max(line.count(",") for line in lines) + 1
    frame = pd.read_csv(
        io.StringIO("\n".join(lines)),
        header=None,
        names=list(range(columns)),
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
    )
    present = frame.fillna("").apply(lambda col: col.str.strip() != "").sum(axis=1).to_numpy()
    width = int(present[0])
    for row, count in enumerate(present):
        if count < 2:
            raise ParseError("expected a label and at least one feature", line_numbers[row])
        if count != width:
            raise ParseError(
                f"row has {count - 1} features, expected {width - 1}", line_numbers[row]
            )

    raw_labels: List[int] = []
    for row, value in enumerate(frame[0]):
        try:
            raw_labels.append(int(value.strip()))
        except ValueError:
            raise ParseError(f"label '{value}' is not an integer", line_numbers[row]) from None

    values = frame.iloc[:, 1:width].to_numpy(dtype=object)
    try:
        features = values.astype(np.float64)
    except ValueError:
        for row, record in enumerate(values):
            try:
                record.astype(np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric feature: {exc}", line_numbers[row]) from None
        raise
    finite = np.isfinite(features).all(axis=1)
    if not finite.all():
        row = int(np.argmin(finite))
        raise ParseError("NaN or infinite feature", line_numbers[row])

    label_map: Dict[int, int] = {
        original: dense for dense, original in enumerate(sorted(set(raw_labels)))
    }
    labels = np.array([label_map[y] for y in raw_labels], dtype=np.int64)
    logger.info(
        f"Loaded {len(labels)} instances of {len(label_map)} classes "
        f"(D={features.shape[1]}) from {path}"
    )
    return Dataset(
        features=features,
        labels=labels,
        num_classes=len(label_map),
        metadata={"source": str(path), "label_map": label_map},
    )


def save_feature_csv(dataset: Dataset, path: PathLike) -> Path:
    """Write the dataset as ``label,f1,...,fD`` rows plus a label-map sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.features)
    frame.insert(0, "label", dataset.labels)
    frame.to_csv(path, header=False, index=False, lineterminator="\n")

    label_map = dataset.metadata.get("label_map") or {
        c: c for c in range(dataset.num_classes)
    }
    sidecar = label_map_path(path)
    sidecar.write_text(
        json.dumps({str(k): int(v) for k, v in label_map.items()}, indent=2, sort_keys=True),
        encoding="utf-8",
    )
    return path


def split_sessions(dataset: Dataset, spec: SplitSpec) -> SessionStream:
    """Shuffle classes by seed and partition them into the base and N-way K-shot sessions.

    Per class, ``test_per_class`` instances are held out using ``spec.seed``.
    Base classes train on every remaining instance; incremental classes get K
    of the remaining instances drawn with ``spec.instance_seed``.
    """
    seed = spec.seed if spec.seed is not None else 0
    instance_seed = spec.instance_seed if spec.instance_seed is not None else seed
    classes = dataset.classes
    needed = spec.base_class_count + spec.incremental_class_count
    if needed > len(classes):
        raise ContractError(
            f"split needs {needed} classes but the dataset has {len(classes)}"
        )

    class_rng = np.random.default_rng(seed)
    instance_rng = np.random.default_rng(instance_seed)
    order = [int(c) for c in class_rng.permutation(classes)][:needed]

    train_rows: Dict[int, np.ndarray] = {}
    test_rows: Dict[int, np.ndarray] = {}
    for position, class_id in enumerate(order):
        rows = dataset.indices_of(class_id)
        if rows.size < spec.shot + spec.test_per_class:
            raise CapacityError(
                f"class {class_id} has {rows.size} instances, needs "
                f"{spec.shot + spec.test_per_class} (shot + test_per_class)",
                class_id=class_id,
            )
        shuffled = class_rng.permutation(rows)
        test_rows[class_id] = np.sort(shuffled[: spec.test_per_class])
        remaining = shuffled[spec.test_per_class :]
        if position < spec.base_class_count:
            train_rows[class_id] = np.sort(remaining)
        else:
            train_rows[class_id] = np.sort(instance_rng.permutation(remaining)[: spec.shot])

    session_classes = [order[: spec.base_class_count]]
    for b in range(spec.session_count):
        start = spec.base_class_count + b * spec.way
        session_classes.append(order[start : start + spec.way])

    def gather(rows_by_class: Dict[int, np.ndarray], class_ids: List[int]) -> Dataset:
        if not class_ids:
            return dataset.subset([])
        return dataset.subset(np.concatenate([rows_by_class[c] for c in class_ids]))

    base = gather(train_rows, session_classes[0])
    sessions = [gather(train_rows, classes_b) for classes_b in session_classes[1:]]
    test_sets = []
    seen: List[int] = []
    for classes_b in session_classes:
        seen = seen + classes_b
        test_sets.append(gather(test_rows, seen))

    logger.info(
        f"Split {needed} classes: {spec.base_class_count} base, "
        f"{spec.session_count} sessions of {spec.way}-way {spec.shot}-shot"
    )
    return SessionStream(
        base=base,
        sessions=sessions,
        test_sets=test_sets,
        session_classes=session_classes,
        class_order=order,
        way=spec.way,
        shot=spec.shot,
    )
