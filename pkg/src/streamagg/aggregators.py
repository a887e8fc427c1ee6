"""Majority vote, one-pass and two-pass streaming aggregation, online chunking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence, Union

import numpy as np

from . import _kernels
from .model import Hyperparameters, TaskBatch, WorkerState

Mode = Literal["onepass", "twopass"]

# worker ids below this (or below 8x the batch size) use a dense id -> slot table
_DENSE_IDS = 1 << 20


@dataclass
class LabelStream:
    """Tasks packed into flat arrays; task ``i`` owns labels ``ptr[i]:ptr[i+1]``."""

    task_ids: np.ndarray
    ptr: np.ndarray
    workers: np.ndarray
    classes: np.ndarray
    num_classes: int

    @classmethod
    def from_batches(cls, batches: Sequence[TaskBatch]) -> LabelStream:
        if not batches:
            raise ValueError("no tasks to aggregate")
        k = batches[0].num_classes
        sizes = np.empty(len(batches), dtype=np.int64)
        for i, b in enumerate(batches):
            if b.num_classes != k:
                raise ValueError("all batches must share num_classes")
            if len(b) == 0:
                raise ValueError(f"no labels for task {b.task_id}")
            sizes[i] = len(b)
        ptr = np.zeros(len(batches) + 1, dtype=np.int64)
        np.cumsum(sizes, out=ptr[1:])
        return cls(
            np.array([b.task_id for b in batches], dtype=np.int64),
            ptr,
            np.concatenate([b.workers for b in batches]),
            np.concatenate([b.classes for b in batches]),
            k,
        )

    def __len__(self) -> int:
        return int(self.task_ids.size)

    @property
    def num_labels(self) -> int:
        return int(self.workers.size)

    def take(self, order: np.ndarray) -> LabelStream:
        """Reorder (or subset) tasks by position."""
        order = np.asarray(order, dtype=np.int64)
        sizes = np.diff(self.ptr)[order]
        ptr = np.zeros(order.size + 1, dtype=np.int64)
        np.cumsum(sizes, out=ptr[1:])
        starts = self.ptr[order]
        idx = np.repeat(starts - ptr[:-1], sizes) + np.arange(ptr[-1])
        return LabelStream(
            self.task_ids[order], ptr, self.workers[idx], self.classes[idx], self.num_classes
        )

    def slice(self, start: int, stop: int) -> LabelStream:
        lo, hi = self.ptr[start], self.ptr[stop]
        return LabelStream(
            self.task_ids[start:stop],
            self.ptr[start : stop + 1] - lo,
            self.workers[lo:hi],
            self.classes[lo:hi],
            self.num_classes,
        )

    def batches(self) -> list[TaskBatch]:
        return [
            TaskBatch(
                int(self.task_ids[i]),
                self.workers[self.ptr[i] : self.ptr[i + 1]],
                self.classes[self.ptr[i] : self.ptr[i + 1]],
                self.num_classes,
            )
            for i in range(len(self))
        ]


StreamLike = Union[LabelStream, Sequence[TaskBatch]]


def as_stream(data: StreamLike) -> LabelStream:
    if isinstance(data, LabelStream):
        return data
    return LabelStream.from_batches(list(data))


@dataclass
class AggregationResult:
    task_ids: np.ndarray
    labels: np.ndarray
    worker_ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    qualities: np.ndarray = field(default_factory=lambda: np.empty(0))
    passes: int = 1

    @property
    def tasks_processed(self) -> int:
        return int(self.task_ids.size)

    def label_map(self) -> dict[int, int]:
        return dict(zip(self.task_ids.tolist(), self.labels.tolist()))

    def quality_map(self) -> dict[int, float]:
        return dict(zip(self.worker_ids.tolist(), self.qualities.tolist()))


class StreamSession:
    """Persistent one-pass state: per-worker counts plus per-task estimates.

    Raw labels are never retained; after each call the session holds one
    count pair per distinct worker seen and one label per processed task.
    Workers are given a slot on first appearance, starting at the prior mode.
    """

    def __init__(self, num_classes: int, hyper: Hyperparameters | None = None):
        if num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {num_classes}")
        self.num_classes = int(num_classes)
        self.hyper = hyper or Hyperparameters()
        self._slot: dict[int, int] = {}
        self._lookup = np.full(0, -1, dtype=np.int64)
        self._ids = np.empty(16, dtype=np.int64)
        self._correct = np.zeros(16, dtype=np.int64)
        self._labeled = np.zeros(16, dtype=np.int64)
        self._task_parts: list[np.ndarray] = []
        self._label_parts: list[np.ndarray] = []
        self._tasks_processed = 0

    # -- state -------------------------------------------------------------

    @property
    def num_workers(self) -> int:
        return len(self._slot)

    @property
    def tasks_processed(self) -> int:
        return self._tasks_processed

    def state_size(self) -> int:
        """Entries held: one per distinct worker plus one per processed task."""
        return len(self._slot) + sum(p.size for p in self._label_parts)

    @property
    def labels_so_far(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t, y in zip(self._task_parts, self._label_parts):
            out.update(zip(t.tolist(), y.tolist()))
        return out

    def worker_states(self) -> dict[int, WorkerState]:
        n = len(self._slot)
        return {
            int(w): WorkerState(int(w), int(c), int(l))
            for w, c, l in zip(self._ids[:n], self._correct[:n], self._labeled[:n])
        }

    def _slot_qualities(self) -> np.ndarray:
        n = len(self._slot)
        a, b = self.hyper.alpha, self.hyper.beta
        denom = self._labeled[:n] + a + b - 2.0
        safe = np.where(denom == 0.0, 1.0, denom)
        return np.where(denom == 0.0, 0.5, (self._correct[:n] + a - 1.0) / safe)

    def qualities(self) -> tuple[np.ndarray, np.ndarray]:
        """Current ``(worker_ids, qualities)`` sorted by worker id."""
        n = len(self._slot)
        order = np.argsort(self._ids[:n], kind="stable")
        return self._ids[:n][order].copy(), self._slot_qualities()[order]

    def result(self, passes: int = 1) -> AggregationResult:
        tasks = np.concatenate(self._task_parts) if self._task_parts else np.empty(0, np.int64)
        labels = np.concatenate(self._label_parts) if self._label_parts else np.empty(0, np.int64)
        ids, q = self.qualities()
        return AggregationResult(tasks, labels, ids, q, passes)

    # -- slot management ----------------------------------------------------

    def _grow(self, needed: int) -> None:
        cap = self._ids.size
        if needed <= cap:
            return
        while cap < needed:
            cap *= 2
        for name in ("_ids", "_correct", "_labeled"):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            new[: old.size] = old
            setattr(self, name, new)

    def _register(self, new_ids: np.ndarray) -> None:
        base = len(self._slot)
        slots = np.arange(base, base + new_ids.size)
        self._grow(base + new_ids.size)
        self._ids[slots] = new_ids
        self._slot.update(zip(new_ids.tolist(), slots.tolist()))
        inside = (new_ids >= 0) & (new_ids < self._lookup.size)
        self._lookup[new_ids[inside]] = slots[inside]

    def _ensure_lookup(self, size: int) -> None:
        if size <= self._lookup.size:
            return
        table = np.full(max(size, 2 * self._lookup.size), -1, dtype=np.int64)
        n = len(self._slot)
        ids = self._ids[:n]
        inside = (ids >= 0) & (ids < table.size)
        table[ids[inside]] = np.flatnonzero(inside)
        self._lookup = table

    def _slots_for(self, workers: np.ndarray, register: bool) -> np.ndarray:
        """Map worker ids to state slots; new workers get slots in increasing id order."""
        if workers.size == 0:
            return np.empty(0, dtype=np.int64)
        lo, hi = int(workers.min()), int(workers.max())
        if lo >= 0 and hi < max(_DENSE_IDS, 8 * workers.size):
            # dense ids: table lookup, no sort
            self._ensure_lookup(hi + 1)
            slots, unseen = _kernels.lookup_slots(workers, self._lookup)
            if unseen is not None:
                new_ids = np.flatnonzero(unseen)
                if not register:
                    raise KeyError(f"worker {int(new_ids[0])} has no state in this session")
                self._register(new_ids)
                slots, _ = _kernels.lookup_slots(workers, self._lookup)
            return slots
        uniq, inverse = np.unique(workers, return_inverse=True)
        known = np.array([w in self._slot for w in uniq.tolist()], dtype=bool)
        if not known.all():
            if not register:
                raise KeyError(f"worker {int(uniq[~known][0])} has no state in this session")
            self._register(uniq[~known])
        uniq_slots = np.array([self._slot[w] for w in uniq.tolist()], dtype=np.int64)
        return uniq_slots[inverse.reshape(-1)]

    # -- processing ---------------------------------------------------------

    def process_stream(self, stream: LabelStream) -> np.ndarray:
        """Run the one-pass update over every task in ``stream``, in order."""
        if stream.num_classes != self.num_classes:
            raise ValueError(
                f"stream has {stream.num_classes} classes, session expects {self.num_classes}"
            )
        if np.any(np.diff(stream.ptr) == 0):
            raise ValueError("no labels for task")
        slots = self._slots_for(stream.workers, register=True)
        labels = _kernels.onepass_sweep(
            stream.ptr,
            slots,
            stream.classes,
            self._correct,
            self._labeled,
            self.hyper.alpha,
            self.hyper.beta,
            self.num_classes,
        )
        self._task_parts.append(stream.task_ids.copy())
        self._label_parts.append(labels)
        self._tasks_processed += len(stream)
        return labels

    def process(self, batch: TaskBatch) -> int:
        """Process a single task; returns its estimated class."""
        return int(self.process_stream(LabelStream.from_batches([batch]))[0])

    def reestimate(self, stream: LabelStream) -> np.ndarray:
        """Weighted majority vote with weights ``K * quality - 1``; counts untouched."""
        slots = self._slots_for(stream.workers, register=False)
        weights = self.num_classes * self._slot_qualities() - 1.0
        return _kernels.vote_sweep(stream.ptr, slots, stream.classes, weights, self.num_classes)


def majority_vote(data: StreamLike) -> AggregationResult:
    stream = as_stream(data)
    if np.any(np.diff(stream.ptr) == 0):
        raise ValueError("no labels for task")
    labels = _kernels.count_vote_sweep(stream.ptr, stream.classes, stream.num_classes)
    return AggregationResult(stream.task_ids.copy(), labels)


def la_onepass(data: StreamLike, hyper: Hyperparameters | None = None) -> AggregationResult:
    """Single traversal: estimate each task, then credit its workers.

    Tasks are consumed in the order given. Returns the per-task estimates and
    the final quality of every worker that labeled at least one task.
    """
    stream = as_stream(data)
    session = StreamSession(stream.num_classes, hyper)
    session.process_stream(stream)
    return session.result(passes=1)


def la_twopass(data: StreamLike, hyper: Hyperparameters | None = None) -> AggregationResult:
    """One-pass followed by a weighted-majority-vote re-estimate of every task."""
    stream = as_stream(data)
    session = StreamSession(stream.num_classes, hyper)
    session.process_stream(stream)
    labels = session.reestimate(stream)
    ids, q = session.qualities()
    return AggregationResult(stream.task_ids.copy(), labels, ids, q, passes=2)


def online_aggregate(
    chunks: Iterable[StreamLike],
    hyper: Hyperparameters | None = None,
    mode: Mode = "onepass",
    session: StreamSession | None = None,
) -> list[AggregationResult]:
    """Aggregate chunks that arrive in order, keeping only worker state between them.

    Each result holds the labels of that chunk's tasks and the worker
    qualities as of the end of the chunk. In ``twopass`` mode the chunk's
    tasks are re-estimated with those end-of-chunk qualities; earlier chunks
    are never revisited.
    """
    if mode not in ("onepass", "twopass"):
        raise ValueError(f"unknown mode {mode!r}; expected 'onepass' or 'twopass'")
    results = []
    for chunk in chunks:
        stream = as_stream(chunk)
        if session is None:
            session = StreamSession(stream.num_classes, hyper)
        labels = session.process_stream(stream)
        if mode == "twopass":
            labels = session.reestimate(stream)
        ids, q = session.qualities()
        results.append(
            AggregationResult(
                stream.task_ids.copy(), labels, ids, q, passes=2 if mode == "twopass" else 1
            )
        )
    return results
