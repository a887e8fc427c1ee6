"""Beta-Bernoulli one-coin worker model and its closed-form estimation rules.

Every function here is pure and works on a single task or a single worker.
The array kernels in :mod:`streamagg._kernels` implement the same rules over
packed label arrays and are checked against these functions in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class Hyperparameters:
    """Beta prior pseudo-counts for correct (``alpha``) and incorrect (``beta``) labels."""

    alpha: float = 2.0
    beta: float = 2.0

    def __post_init__(self) -> None:
        if not (self.alpha >= 1.0 and self.beta >= 1.0):
            raise ValueError(
                f"alpha and beta must both be >= 1, got alpha={self.alpha}, beta={self.beta}"
            )

    @property
    def prior_mode(self) -> float:
        return _mode(0.0, 0.0, self.alpha, self.beta)


@dataclass(frozen=True)
class WorkerState:
    worker_id: int
    correct_count: int = 0
    labeled_count: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.correct_count <= self.labeled_count:
            raise ValueError(
                "expected 0 <= correct_count <= labeled_count, got "
                f"{self.correct_count}, {self.labeled_count}"
            )


class LabelRecord(NamedTuple):
    task_id: int
    worker_id: int
    class_label: int


@dataclass
class TaskBatch:
    """All labels of one task, stored as parallel worker/class arrays."""

    task_id: int
    workers: np.ndarray
    classes: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        self.workers = np.asarray(self.workers, dtype=np.int64)
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if self.workers.shape != self.classes.shape or self.workers.ndim != 1:
            raise ValueError("workers and classes must be 1-d arrays of equal length")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {self.num_classes}")
        if self.classes.size and (
            self.classes.min() < 0 or self.classes.max() >= self.num_classes
        ):
            raise ValueError(
                f"task {self.task_id}: class label outside [0, {self.num_classes})"
            )

    @classmethod
    def from_records(cls, records: Sequence[LabelRecord], num_classes: int) -> TaskBatch:
        if not records:
            raise ValueError("no labels for task")
        task_id = records[0].task_id
        if any(r.task_id != task_id for r in records):
            raise ValueError("records in a TaskBatch must share one task_id")
        return cls(
            task_id,
            np.array([r.worker_id for r in records], dtype=np.int64),
            np.array([r.class_label for r in records], dtype=np.int64),
            num_classes,
        )

    @property
    def records(self) -> list[LabelRecord]:
        return [
            LabelRecord(self.task_id, int(w), int(c))
            for w, c in zip(self.workers, self.classes)
        ]

    def __len__(self) -> int:
        return int(self.workers.size)


def _mode(correct: float, labeled: float, alpha: float, beta: float) -> float:
    denom = labeled + alpha + beta - 2.0
    if denom == 0.0:
        # alpha = beta = 1 with no evidence: limit of the uniform prior
        return 0.5
    return (correct + alpha - 1.0) / denom


def posterior_mode(state: WorkerState, hyper: Hyperparameters) -> float:
    """MAP estimate of a worker's quality under its Beta posterior.

    Returns ``(C + alpha - 1) / (n + alpha + beta - 2)`` where ``C`` is the
    number of labels that agreed with the estimated truth and ``n`` the number
    of labels the worker has given. The degenerate ``alpha = beta = 1, n = 0``
    case returns 0.5.
    """
    return _mode(state.correct_count, state.labeled_count, hyper.alpha, hyper.beta)


def _check_nonempty(batch: TaskBatch) -> None:
    if len(batch) == 0:
        raise ValueError("no labels for task")


def _argmax_first(scores: np.ndarray) -> int:
    # np.argmax already returns the first maximal index
    return int(np.argmax(scores))


def class_scores(batch: TaskBatch, weights: Mapping[int, float]) -> np.ndarray:
    """Per-class sum of voter weights, accumulated in record order."""
    scores = np.zeros(batch.num_classes)
    for w, c in zip(batch.workers.tolist(), batch.classes.tolist()):
        scores[c] += weights[w]
    return scores


def estimate_label(
    batch: TaskBatch, qualities: Mapping[int, float]
) -> tuple[int, np.ndarray]:
    """Quality-weighted vote for one task.

    Returns the winning class (smallest index on ties) and the length-K
    score vector.
    """
    _check_nonempty(batch)
    scores = class_scores(batch, qualities)
    return _argmax_first(scores), scores


def wmv_weight(quality: float, num_classes: int) -> float:
    """Weighted-majority-vote weight ``K * quality - 1``; zero at chance level."""
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    return num_classes * quality - 1.0


def estimate_label_wmv(batch: TaskBatch, weights: Mapping[int, float]) -> int:
    _check_nonempty(batch)
    return _argmax_first(class_scores(batch, weights))


def update_counts(state: WorkerState, given_label: int, estimated_truth: int) -> WorkerState:
    return replace(
        state,
        correct_count=state.correct_count + int(given_label == estimated_truth),
        labeled_count=state.labeled_count + 1,
    )


def log_posterior(
    qualities: Iterable[float],
    states: Iterable[WorkerState],
    hyper: Hyperparameters,
) -> float:
    """Unnormalised joint log posterior of worker qualities given their counts.

    Terms with a zero exponent are skipped, so an empty-evidence uniform prior
    contributes exactly 0.
    """
    total = 0.0
    for w, s in zip(qualities, states):
        if not 0.0 < w < 1.0:
            raise ValueError("log-posterior undefined at boundary")
        a = s.correct_count + hyper.alpha - 1.0
        b = s.labeled_count - s.correct_count + hyper.beta - 1.0
        if a:
            total += a * math.log(w)
        if b:
            total += b * math.log1p(-w)
    return total
