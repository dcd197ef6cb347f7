"""Pre-training, fake-task meta-training and few-shot session finetuning."""

import logging
import math
from bisect import bisect_right
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from fscil.exceptions import ContractError, DimensionError, DivergenceError, NumericError
from fscil.models import functional as F
from fscil.models.dataset import Dataset
from fscil.models.network import PARAMETER_GROUPS, Classifier, ModelState
from fscil.models.optimizer import OptimizerState
from fscil.models.tensor import Tensor, backward, no_grad, use_tape
from fscil.schemas.config import FakeTaskSpec, FinetuneConfig, MetaConfig, PretrainConfig
from fscil.schemas.report import TrainLogEntry
from fscil.services.calibration_service import calibrated_scores
from fscil.services.network_service import (
    augment_classifier,
    compute_prototypes,
    embed,
    match_column_norm,
    raw_logits,
    replace_classifier,
    select_columns,
)
from fscil.services.sampler_service import FakeTaskSequence, FakeTaskStream, sample_fake_tasks

logger = logging.getLogger(__name__)


@dataclass
class TrainingResult:
    """Trained state, per-step log and summary metrics of one training stage."""

    state: ModelState
    log: List[TrainLogEntry] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)


# Optimizer


def lr_at(iteration: int, cfg: MetaConfig) -> float:
    """Step-decayed learning rate: base · decay^⌊iteration / every⌋."""
    return cfg.lr * cfg.decay_factor ** (iteration // cfg.decay_every_iters)


def sgd_step(
    params: Dict[str, Tensor],
    opt: OptimizerState,
    lr: float,
    momentum: float,
) -> None:
    """One momentum SGD update in place: v ← μv + g; p ← p − lr·v.

    Parameters without a gradient are treated as having a zero gradient.
    """
    for name, param in params.items():
        grad = param.grad if param.grad is not None else np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise DimensionError(f"gradient of {name} has shape {grad.shape}, expected {param.shape}")
        velocity = opt.velocity.get(name)
        velocity = grad.copy() if velocity is None else momentum * velocity + grad
        opt.velocity[name] = velocity
        param.data = param.data - lr * velocity
    opt.iteration += 1


def pretrain_lr(epoch: int, cfg: PretrainConfig) -> float:
    """Milestone-decayed learning rate: base · decay^(milestones reached by epoch)."""
    return cfg.lr * cfg.decay_factor ** bisect_right(cfg.decay_epochs, epoch)


def clip_gradients(params: Dict[str, Tensor], max_norm: Optional[float]) -> float:
    """Scale gradients in place so their global ℓ2 norm is at most max_norm.

    Returns the norm before clipping.
    """
    grads = [p.grad for p in params.values() if p.grad is not None]
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm:
        factor = max_norm / total
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * factor
    return total


def _zero_grads(params: Dict[str, Tensor]) -> None:
    for param in params.values():
        param.zero_grad()


def _check_finite(loss: Tensor, iteration: int) -> None:
    if not math.isfinite(loss.item()):
        raise DivergenceError(f"loss became {loss.item()}", iteration)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if labels.size == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=1) == labels) * 100.0)


@contextmanager
def _frozen(state: ModelState, groups: Sequence[str]) -> Iterator[None]:
    """Temporarily stop gradient tracking for parameter groups outside ``groups``."""
    frozen = [
        t for name, t in state.parameters().items() if name.split(".", 1)[0] not in groups
    ]
    previous = [t.requires_grad for t in frozen]
    for t in frozen:
        t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in zip(frozen, previous):
            t.requires_grad = flag


# Pre-training


def pretrain(
    state: ModelState,
    base: Dataset,
    cfg: PretrainConfig,
    rng: np.random.Generator,
    progress: bool = False,
) -> TrainingResult:
    """Train φ and W with cross-entropy on the base session, in place.

    The rate follows `pretrain_lr`. An epoch whose mean loss exceeds
    ``divergence_factor`` times the first epoch's mean loss (or chance-level
    loss log n, whichever is larger) raises DivergenceError, as does any
    non-finite batch loss.
    """
    missing = sorted(set(base.classes) - set(state.classifier.class_ids))
    if missing or state.classifier.width != len(base.classes):
        raise ContractError(
            f"classifier has {state.classifier.width} columns for "
            f"{len(base.classes)} base classes (missing {missing})"
        )
    params = state.parameters(("embedding", "classifier"))
    opt = OptimizerState()
    labels = state.classifier.columns_for(base.labels)
    log: List[TrainLogEntry] = []
    step = 0
    reference: Optional[float] = None

    epochs = tqdm(range(cfg.epochs), desc="pretrain", disable=not progress)
    for epoch in epochs:
        lr = pretrain_lr(epoch, cfg)
        losses, correct = [], 0
        for rows in _batches(len(base), cfg.batch_size, rng):
            with use_tape() as tape:
                logits = raw_logits(state.classifier, embed(state.net, Tensor.wrap(base.features[rows])))
                try:
                    loss = F.cross_entropy(logits, labels[rows])
                except NumericError as exc:
                    raise DivergenceError(str(exc), step) from None
                _check_finite(loss, step)
                backward(loss)
                tape.clear()
            sgd_step(params, opt, lr, cfg.momentum)
            _zero_grads(params)
            losses.append(loss.item())
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels[rows]))
            step += 1
        entry = TrainLogEntry(
            stage="pretrain",
            iteration=epoch,
            lr=lr,
            loss=float(np.mean(losses)) if losses else 0.0,
            accuracy=100.0 * correct / max(len(base), 1),
        )
        log.append(entry)
        logger.info(
            f"pretrain epoch {epoch + 1}/{cfg.epochs}: loss={entry.loss:.4f} "
            f"acc={entry.accuracy:.2f}"
        )
        if reference is None:
            reference = max(entry.loss, math.log(max(len(base.classes), 2)))
        elif entry.loss > cfg.divergence_factor * reference:
            raise DivergenceError(
                f"epoch loss {entry.loss:.4g} exceeds {cfg.divergence_factor:g}x "
                f"the first epoch's {reference:.4g}",
                step,
            )

    if cfg.epochs > 0:
        state.pretrained = True
        state.history.append(f"pretrain epochs={cfg.epochs}")
    state.optimizer = opt
    metrics = {"final_loss": log[-1].loss, "final_accuracy": log[-1].accuracy} if log else {}
    return TrainingResult(state=state, log=log, metrics=metrics)


# Meta-training


def episode_loss(
    state: ModelState,
    seq: FakeTaskSequence,
    train: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> tuple:
    """Summed cross-entropy over the phases of one fake-task sequence.

    Returns the loss tensor and the number of correct and total query
    predictions across phases.
    """
    classifier = select_columns(state.classifier, seq.fake_base_classes)
    total: Optional[Tensor] = None
    correct = count = 0
    for phase_classes, support, query in zip(seq.fake_incremental_classes, seq.supports, seq.queries):
        prototypes = compute_prototypes(support, state.net)
        classifier = replace_classifier(classifier, prototypes, phase_classes)
        embeddings = embed(state.net, Tensor.wrap(query.features))
        logits = calibrated_scores(classifier, embeddings, state.calibration, train=train, rng=rng)
        labels = classifier.columns_for(query.labels)
        loss = F.cross_entropy(logits, labels)
        total = loss if total is None else F.add(total, loss)
        correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))
        count += labels.size
    return total, correct, count


def fake_task_accuracy(
    state: ModelState,
    base: Dataset,
    spec: FakeTaskSpec,
    rng: np.random.Generator,
    episodes: int,
) -> float:
    """Query accuracy in percent over freshly sampled fake-task sequences."""
    correct = count = 0
    with no_grad():
        for _ in range(episodes):
            seq = sample_fake_tasks(base, spec, rng)
            _, c, n = episode_loss(state, seq, train=False)
            correct += c
            count += n
    return 100.0 * correct / count if count else 0.0


def meta_train(
    state: ModelState,
    base: Dataset,
    cfg: MetaConfig,
    rng: np.random.Generator,
    progress: bool = False,
) -> TrainingResult:
    """Optimize on multi-phase fake-incremental tasks sampled from the base session.

    With ``update_backbone`` off only the calibration module is trained.
    Updates the state in place.
    """
    groups = PARAMETER_GROUPS if cfg.update_backbone else ("calibration",)
    params = state.parameters(groups)
    sampler_seed, dropout_seed, eval_seed = rng.integers(0, 2**63 - 1, size=3)
    dropout_rng = np.random.default_rng(dropout_seed)
    opt = OptimizerState()
    log: List[TrainLogEntry] = []
    metrics: Dict[str, float] = {}

    if cfg.eval_episodes:
        metrics["fake_accuracy_before"] = fake_task_accuracy(
            state, base, cfg.fake_task, np.random.default_rng(eval_seed), cfg.eval_episodes
        )
        logger.info(f"fake-task accuracy before meta-training: {metrics['fake_accuracy_before']:.2f}")

    stream = FakeTaskStream(
        base,
        cfg.fake_task,
        np.random.default_rng(sampler_seed),
        count=cfg.iterations * cfg.episodes_per_step,
        prefetch=cfg.prefetch,
    )
    episodes = iter(stream)
    try:
        with _frozen(state, groups):
            for iteration in tqdm(range(cfg.iterations), desc="meta", disable=not progress):
                lr = lr_at(iteration, cfg)
                with use_tape() as tape:
                    total: Optional[Tensor] = None
                    correct = count = 0
                    for _ in range(cfg.episodes_per_step):
                        try:
                            loss, c, n = episode_loss(state, next(episodes), train=True, rng=dropout_rng)
                        except NumericError as exc:
                            raise DivergenceError(str(exc), iteration) from None
                        total = loss if total is None else F.add(total, loss)
                        correct += c
                        count += n
                    total = F.scale(total, 1.0 / cfg.episodes_per_step)
                    _check_finite(total, iteration)
                    backward(total)
                    tape.clear()
                sgd_step(params, opt, lr, cfg.momentum)
                _zero_grads(params)

                entry = TrainLogEntry(
                    stage="meta",
                    iteration=iteration,
                    lr=lr,
                    loss=total.item(),
                    accuracy=100.0 * correct / count if count else 0.0,
                )
                log.append(entry)
                if (iteration + 1) % cfg.log_every == 0:
                    logger.info(
                        f"meta iteration {iteration + 1}/{cfg.iterations}: lr={lr:g} "
                        f"loss={entry.loss:.4f} acc={entry.accuracy:.2f}"
                    )
    finally:
        stream.close()

    if cfg.iterations > 0:
        state.meta_trained = True
        state.history.append(
            f"meta iterations={cfg.iterations} phases={cfg.fake_task.phases} "
            f"backbone={cfg.update_backbone}"
        )
    state.optimizer = opt

    if cfg.eval_episodes:
        metrics["fake_accuracy_after"] = fake_task_accuracy(
            state, base, cfg.fake_task, np.random.default_rng(eval_seed), cfg.eval_episodes
        )
        logger.info(f"fake-task accuracy after meta-training: {metrics['fake_accuracy_after']:.2f}")
    if log:
        metrics["final_loss"] = log[-1].loss
    return TrainingResult(state=state, log=log, metrics=metrics)


# Incremental baselines


def kd_loss(new_logits: Tensor, old_logits: np.ndarray, ce: Tensor, lam: float) -> Tensor:
    """(1 − λ)·CE + λ·distillation towards a frozen model's softmax.

    The first ``old_logits.shape[1]`` columns of ``new_logits`` are the
    previous model's classes; the distillation term is the batch mean of
    −Σ_k S_k(old) log S_k(new) over those columns.
    """
    old = np.asarray(old_logits, dtype=np.float64)
    if (
        new_logits.ndim != 2
        or old.ndim != 2
        or old.shape[0] != new_logits.shape[0]
        or old.shape[1] > new_logits.shape[1]
    ):
        raise DimensionError(
            f"kd_loss: old logits {old.shape} do not fit new logits {new_logits.shape}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"kd_loss: lambda {lam} outside [0, 1]")
    batch, n_old = old.shape
    targets = F.softmax(Tensor.wrap(old), axis=1)
    log_new = F.log_softmax(F.take(new_logits, list(range(n_old)), axis=1), axis=1)
    distill = F.scale(F.sum_all(F.mul(log_new, targets)), -1.0 / batch)
    return F.add(F.scale(ce, 1.0 - lam), F.scale(distill, lam))


def _incremental_sgd(
    state: ModelState,
    session: Dataset,
    cfg: FinetuneConfig,
    rng: np.random.Generator,
    loss_fn: Callable[[Tensor, np.ndarray, np.ndarray], Tensor],
    stage: str,
) -> TrainingResult:
    new_ids = [c for c in session.classes if c not in state.classifier.class_ids]
    model = state.copy()
    with no_grad():
        prototypes = compute_prototypes(session, model.net)
    if cfg.match_norm:
        prototypes = match_column_norm(model.classifier, prototypes)
    grown = augment_classifier(model.classifier, prototypes, new_ids)
    model.classifier = Classifier(Tensor(grown.weights.data, requires_grad=True), grown.class_ids)

    params = model.parameters(("embedding", "classifier"))
    opt = OptimizerState()
    labels = model.classifier.columns_for(session.labels)
    log: List[TrainLogEntry] = []
    step = 0
    for epoch in range(cfg.epochs):
        for rows in _batches(len(session), cfg.batch_size, rng):
            with use_tape() as tape:
                logits = raw_logits(model.classifier, embed(model.net, Tensor.wrap(session.features[rows])))
                try:
                    loss = loss_fn(logits, labels[rows], rows)
                except NumericError as exc:
                    raise DivergenceError(str(exc), step) from None
                _check_finite(loss, step)
                backward(loss)
                tape.clear()
            clip_gradients(params, cfg.clip_norm)
            sgd_step(params, opt, cfg.lr, cfg.momentum)
            _zero_grads(params)
            log.append(
                TrainLogEntry(
                    stage=stage,
                    iteration=step,
                    lr=cfg.lr,
                    loss=loss.item(),
                    accuracy=_accuracy(logits.data, labels[rows]),
                )
            )
            step += 1
    logger.debug(f"{stage}: {step} steps on {len(session)} instances, {len(new_ids)} new classes")
    model.optimizer = opt
    return TrainingResult(state=model, log=log)


def finetune_incremental(
    state: ModelState,
    session: Dataset,
    cfg: FinetuneConfig,
    rng: np.random.Generator,
) -> TrainingResult:
    """Grow the classifier with prototypes, then finetune φ and W with cross-entropy.

    New classes are appended in ascending id order. With ``cfg.match_norm`` the
    prototype columns are first rescaled to the mean norm of the existing
    columns; gradients are clipped to ``cfg.clip_norm``. The input state is
    left untouched; the result holds the adapted copy.
    """
    return _incremental_sgd(
        state, session, cfg, rng, lambda logits, y, rows: F.cross_entropy(logits, y), "finetune"
    )


def kd_incremental(
    state: ModelState,
    session: Dataset,
    cfg: FinetuneConfig,
    lam: float,
    rng: np.random.Generator,
) -> TrainingResult:
    """Like finetune_incremental, with distillation towards the pre-session model."""
    with no_grad():
        old_logits = raw_logits(state.classifier, embed(state.net, Tensor.wrap(session.features))).data

    def loss_fn(logits: Tensor, y: np.ndarray, rows: np.ndarray) -> Tensor:
        return kd_loss(logits, old_logits[rows], F.cross_entropy(logits, y), lam)

    return _incremental_sgd(state, session, cfg, rng, loss_fn, "kd")
