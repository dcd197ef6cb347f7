"""Sampling of multi-phase fake-incremental tasks from the base session."""

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Iterator, List, Optional

import numpy as np

from fscil.exceptions import CapacityError, ContractError
from fscil.models.dataset import Dataset
from fscil.schemas.config import FakeTaskSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FakeTaskSequence:
    """Support and query sets of one sampled fake-incremental episode.

    Phase c (1-based) uses ``supports[c-1]`` over ``fake_incremental_classes[c-1]``
    and ``queries[c-1]`` over the fake base classes plus phases 1..c. Index arrays
    point into the base dataset the sequence was drawn from.
    """

    fake_base_classes: List[int]
    fake_incremental_classes: List[List[int]]
    support_indices: List[np.ndarray]
    query_indices: List[np.ndarray]
    supports: List[Dataset]
    queries: List[Dataset]

    @property
    def phases(self) -> int:
        """Number of fake phases C."""
        return len(self.fake_incremental_classes)

    def seen_classes(self, phase: int) -> List[int]:
        """Fake base classes followed by the classes of phases 1..phase."""
        seen = list(self.fake_base_classes)
        for classes in self.fake_incremental_classes[:phase]:
            seen.extend(classes)
        return seen


def sample_fake_tasks(
    base: Dataset,
    spec: FakeTaskSpec,
    rng: np.random.Generator,
) -> FakeTaskSequence:
    """Split the base label space into fake base and fake incremental classes and draw sets."""
    classes = base.classes
    incremental_count = spec.fake_way * spec.phases
    if incremental_count >= len(classes):
        raise ContractError(
            f"fake_way * phases = {incremental_count} must be smaller than "
            f"the {len(classes)} base classes"
        )
    rows_by_class = {c: base.indices_of(c) for c in classes}
    needed = spec.fake_shot + spec.query_shot
    for c, rows in rows_by_class.items():
        if rows.size < needed:
            raise CapacityError(
                f"base class {c} has {rows.size} instances, fake tasks need {needed}",
                class_id=c,
            )

    shuffled = [int(c) for c in rng.permutation(classes)]
    fake_base = sorted(shuffled[incremental_count:])
    fake_incremental = [
        shuffled[i * spec.fake_way : (i + 1) * spec.fake_way] for i in range(spec.phases)
    ]

    support_indices: List[np.ndarray] = []
    query_indices: List[np.ndarray] = []
    seen = list(fake_base)
    for phase_classes in fake_incremental:
        support_parts = []
        chosen = {}
        for c in phase_classes:
            picked = rng.choice(rows_by_class[c], size=spec.fake_shot, replace=False)
            chosen[c] = picked
            support_parts.append(picked)
        seen = seen + phase_classes

        query_parts = []
        for c in seen:
            pool = rows_by_class[c]
            if c in chosen:
                pool = np.setdiff1d(pool, chosen[c], assume_unique=True)
            query_parts.append(rng.choice(pool, size=spec.query_shot, replace=False))
        support_indices.append(np.concatenate(support_parts))
        query_indices.append(np.concatenate(query_parts))

    return FakeTaskSequence(
        fake_base_classes=fake_base,
        fake_incremental_classes=fake_incremental,
        support_indices=support_indices,
        query_indices=query_indices,
        supports=[base.subset(idx) for idx in support_indices],
        queries=[base.subset(idx) for idx in query_indices],
    )


_DONE = object()


class FakeTaskStream:
    """A fixed number of fake-task sequences, optionally sampled ahead on a thread.

    The stream owns its generator, so prefetching yields exactly the sequences
    the synchronous path would.
    """

    def __init__(
        self,
        base: Dataset,
        spec: FakeTaskSpec,
        rng: np.random.Generator,
        count: int,
        prefetch: int = 0,
    ):
        self.base = base
        self.spec = spec
        self.rng = rng
        self.count = count
        self.prefetch = prefetch
        self._queue: Optional[queue.Queue] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _offer(self, item: object) -> bool:
        """Put ``item`` on the queue unless the stream is closed first."""
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def _produce(self) -> None:
        try:
            for _ in range(self.count):
                if not self._offer(sample_fake_tasks(self.base, self.spec, self.rng)):
                    return
        except Exception as exc:  # surfaced to the consumer
            self._offer(exc)
            return
        self._offer(_DONE)

    def __iter__(self) -> Iterator[FakeTaskSequence]:
        if self.prefetch <= 0:
            for _ in range(self.count):
                yield sample_fake_tasks(self.base, self.spec, self.rng)
            return

        self._queue = queue.Queue(maxsize=self.prefetch)
        self._stop.clear()
        self._thread = threading.Thread(target=self._produce, name="fake-task-sampler", daemon=True)
        self._thread.start()
        logger.debug(f"Started fake-task sampler thread (prefetch={self.prefetch})")
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    return
                if isinstance(item, Exception):
                    raise item
                yield item
        finally:
            self.close()

    def close(self) -> None:
        """Stop the sampler thread if one is running."""
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
