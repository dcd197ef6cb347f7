"""Session-by-session incremental evaluation and accuracy metrics."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fscil.config import get_settings
from fscil.exceptions import ContractError, DimensionError
from fscil.models import functional as F
from fscil.models.dataset import Dataset, SessionStream
from fscil.models.network import Classifier, ModelState
from fscil.models.tensor import Tensor, no_grad
from fscil.schemas.config import FinetuneConfig, SplitSpec
from fscil.schemas.report import EvalReport, TopPrediction, TrialsReport
from fscil.services.calibration_service import calibrated_scores
from fscil.services.dataset_service import split_sessions
from fscil.services.network_service import (
    augment_classifier,
    compute_prototypes,
    cosine_logits,
    embed,
    raw_logits,
)
from fscil.services.training_service import finetune_incremental, kd_incremental

logger = logging.getLogger(__name__)


@dataclass
class EvalOptions:
    """How new classes enter the classifier and how test instances are scored.

    With ``prototype`` off, each session is learned by finetuning (or by
    distillation when ``distill`` is set) instead of prototype augmentation.
    """

    method: str = "limit"
    prototype: bool = True
    calibration: bool = True
    cosine: bool = False
    distill: bool = False
    cosine_temperature: float = 16.0
    finetune: Optional[FinetuneConfig] = None
    kd_lambda: float = 0.5
    top_k: int = 5
    seed: int = 0


# Metrics


def top1_accuracy(logits: np.ndarray, labels: Sequence[int]) -> float:
    """Percentage of rows whose highest score is the label; ties go to the lowest index."""
    labels = np.asarray(labels, dtype=np.int64)
    logits = np.asarray(logits)
    if logits.ndim != 2 or logits.shape[0] != labels.size:
        raise DimensionError(f"{labels.size} labels for logits of shape {logits.shape}")
    if labels.size == 0:
        raise ContractError("accuracy of an empty test set is undefined")
    return float(np.mean(np.argmax(logits, axis=1) == labels) * 100.0)


def performance_drop(session_acc: Sequence[float]) -> float:
    """First-session accuracy minus last-session accuracy."""
    if not session_acc:
        raise ContractError("performance drop needs at least one session")
    return round(float(session_acc[0]) - float(session_acc[-1]), 2)


def harmonic_mean(base_acc: float, inc_acc: float) -> float:
    """2ab/(a+b), zero when both are zero."""
    total = base_acc + inc_acc
    return 2.0 * base_acc * inc_acc / total if total > 0 else 0.0


def confusion_matrix(predictions: Sequence[int], labels: Sequence[int], size: int) -> np.ndarray:
    """Counts indexed [true, predicted]."""
    matrix = np.zeros((size, size), dtype=np.int64)
    np.add.at(
        matrix,
        (np.asarray(labels, dtype=np.int64), np.asarray(predictions, dtype=np.int64)),
        1,
    )
    return matrix


def split_accuracy(confusion: np.ndarray, base_class_count: int) -> Tuple[float, float, float]:
    """Accuracy on base rows, on incremental rows and their harmonic mean."""
    diag = np.diag(confusion)
    row_totals = confusion.sum(axis=1)

    def rate(rows: slice) -> float:
        total = row_totals[rows].sum()
        return float(diag[rows].sum() / total * 100.0) if total else 0.0

    base = rate(slice(0, base_class_count))
    inc = rate(slice(base_class_count, None))
    return base, inc, harmonic_mean(base, inc)


def top_k_predictions(
    logits: np.ndarray, labels: Sequence[int], class_ids: Sequence[int], k: int
) -> List[TopPrediction]:
    """Highest-probability classes per row, best first."""
    with no_grad():
        probs = F.softmax(Tensor.wrap(np.asarray(logits, dtype=np.float64)), axis=1).data
    k = min(k, probs.shape[1])
    order = np.argsort(-probs, axis=1, kind="stable")[:, :k]
    return [
        TopPrediction(
            label=int(label),
            classes=[int(class_ids[j]) for j in row],
            probabilities=[round(float(p), 6) for p in probs[i, row]],
        )
        for i, (label, row) in enumerate(zip(labels, order))
    ]


# Scoring


def _scorer(state: ModelState, classifier: Classifier, options: EvalOptions) -> Callable[[np.ndarray], np.ndarray]:
    def score(features: np.ndarray) -> np.ndarray:
        # Workers have their own thread-local grad state.
        with no_grad():
            embeddings = embed(state.net, Tensor.wrap(features))
            if options.cosine:
                return cosine_logits(classifier, embeddings, options.cosine_temperature).data
            if options.calibration:
                return calibrated_scores(classifier, embeddings, state.calibration).data
            return raw_logits(classifier, embeddings).data

    return score


def score_dataset(
    state: ModelState,
    classifier: Classifier,
    test_set: Dataset,
    options: EvalOptions,
    batch_size: Optional[int] = None,
    num_threads: Optional[int] = None,
) -> np.ndarray:
    """Logits for every test row, computed in batches on a thread pool."""
    settings = get_settings()
    batch_size = batch_size or settings.eval_batch_size
    num_threads = num_threads or settings.num_threads
    score = _scorer(state, classifier, options)
    chunks = [
        test_set.features[start : start + batch_size]
        for start in range(0, len(test_set), batch_size)
    ]
    if not chunks:
        return np.zeros((0, classifier.width))
    if num_threads <= 1 or len(chunks) == 1:
        return np.concatenate([score(chunk) for chunk in chunks], axis=0)
    with ThreadPoolExecutor(max_workers=num_threads) as pool:
        return np.concatenate(list(pool.map(score, chunks)), axis=0)


# Runner


def run_incremental(
    state: ModelState,
    stream: SessionStream,
    options: EvalOptions,
    rng: Optional[np.random.Generator] = None,
) -> EvalReport:
    """Evaluate on every session's cumulative test set, growing the classifier as sessions arrive.

    The input state is never modified.
    """
    if stream.base.dim != state.net.input_dim:
        raise DimensionError(
            f"stream features have {stream.base.dim} dimensions, model expects {state.net.input_dim}"
        )
    missing = [c for c in stream.session_classes[0] if c not in state.classifier.class_ids]
    if missing:
        raise ContractError(f"model has no columns for base classes {missing}")
    rng = rng if rng is not None else np.random.default_rng(options.seed)
    finetune_cfg = options.finetune or FinetuneConfig()

    current = state
    classifier = Classifier(
        Tensor(current.classifier.weights.data), list(current.classifier.class_ids)
    )
    session_acc: List[float] = []
    class_counts: List[Dict[int, int]] = []
    logits = np.zeros((0, 0))
    for b, test_set in enumerate(stream.test_sets):
        if b > 0:
            session = stream.sessions[b - 1]
            if not options.prototype:
                if options.distill:
                    current = kd_incremental(current, session, finetune_cfg, options.kd_lambda, rng).state
                else:
                    current = finetune_incremental(current, session, finetune_cfg, rng).state
                classifier = current.classifier
            else:
                with no_grad():
                    prototypes = compute_prototypes(session, current.net)
                classifier = augment_classifier(classifier, prototypes, stream.session_classes[b])

        logits = score_dataset(current, classifier, test_set, options)
        labels = classifier.columns_for(test_set.labels)
        session_acc.append(round(top1_accuracy(logits, labels), 2))
        class_counts.append(test_set.class_counts())
        logger.info(f"session {b}: {len(test_set)} test instances, accuracy {session_acc[-1]:.2f}")

    final = stream.test_sets[-1]
    order = stream.seen_classes(stream.session_count)
    position = {c: i for i, c in enumerate(order)}
    predicted = [position[classifier.class_ids[j]] for j in np.argmax(logits, axis=1)]
    truth = [position[int(y)] for y in final.labels]
    confusion = confusion_matrix(predicted, truth, len(order))
    base_acc, inc_acc, harmonic = split_accuracy(confusion, stream.base_class_count)

    return EvalReport(
        seed=options.seed,
        method=options.method,
        session_acc=session_acc,
        pd=performance_drop(session_acc),
        base_acc=round(base_acc, 2),
        inc_acc=round(inc_acc, 2),
        harmonic=round(harmonic, 2),
        class_order=order,
        confusion=confusion.tolist(),
        per_session_class_counts=class_counts,
        top_predictions=top_k_predictions(logits, final.labels, classifier.class_ids, options.top_k),
    )


def run_trials(
    state: ModelState,
    dataset: Dataset,
    split: SplitSpec,
    options: EvalOptions,
    instance_seeds: Sequence[int],
) -> TrialsReport:
    """Repeat the incremental evaluation over several K-shot draws of the same split."""
    if not instance_seeds:
        raise ContractError("run_trials needs at least one instance seed")
    rows: List[List[float]] = []
    for seed in instance_seeds:
        stream = split_sessions(dataset, split.model_copy(update={"instance_seed": int(seed)}))
        report = run_incremental(state, stream, options)
        rows.append(report.session_acc)
        logger.info(f"trial instance_seed={seed}: final accuracy {report.session_acc[-1]:.2f}")
    table = np.array(rows)
    final = table[:, -1]
    return TrialsReport(
        seed=options.seed,
        method=options.method,
        instance_seeds=[int(s) for s in instance_seeds],
        session_acc=rows,
        mean_session_acc=[round(float(v), 2) for v in table.mean(axis=0)],
        final_mean=round(float(final.mean()), 2),
        final_std=round(float(final.std()), 2),
    )
