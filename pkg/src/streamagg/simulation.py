"""Synthetic one-coin crowds and the quality-convergence experiment.

Workers emit the true class with probability equal to their quality and
otherwise a class drawn uniformly from the K-1 wrong ones. The convergence
run records every worker's estimated quality after each task so the
``eps / sqrt(t)`` error band can be checked empirically.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .aggregators import LabelStream, la_onepass
from .ingestion import Dataset
from .model import Hyperparameters

# Phi(eps) - Phi(-eps)
NOMINAL_COVERAGE = {1.0: 0.682689, 2.0: 0.954500}


def normal_coverage(eps: float) -> float:
    """Probability mass of a standard normal within ``eps`` of zero."""
    return math.erf(eps / math.sqrt(2.0))


@dataclass(frozen=True)
class SimConfig:
    num_workers: int = 20
    num_tasks: int = 1000
    num_classes: int = 4
    quality: float | None = 0.6
    quality_range: tuple[float, float] | None = None
    seed: int = 0
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    workers_per_task: int | None = None

    def __post_init__(self) -> None:
        if self.num_workers < 1 or self.num_tasks < 1:
            raise ValueError("num_workers and num_tasks must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if (self.quality is None) == (self.quality_range is None):
            raise ValueError("give exactly one of quality or quality_range")
        lo, hi = self.quality_range or (self.quality, self.quality)
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"invalid quality range [{lo}, {hi}]")
        if self.workers_per_task is not None and not 1 <= self.workers_per_task <= self.num_workers:
            raise ValueError("workers_per_task must be in [1, num_workers]")


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    workers_seq, labels_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(workers_seq), np.random.default_rng(labels_seq)


def generate_workers(config: SimConfig) -> np.ndarray:
    if config.quality is not None:
        return np.full(config.num_workers, float(config.quality))
    lo, hi = config.quality_range
    rng, _ = _rngs(config.seed)
    return rng.uniform(lo, hi, size=config.num_workers)


def generate_labels(
    true_qualities: np.ndarray,
    num_tasks: int,
    num_classes: int,
    seed: int | np.random.Generator,
    workers_per_task: int | None = None,
) -> tuple[LabelStream, np.ndarray]:
    """Draw truths and labels; returns the label stream and the true class per task.

    With ``workers_per_task`` set, each task is labeled by that many distinct
    workers chosen uniformly; otherwise every worker labels every task.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    w = np.asarray(true_qualities, dtype=float)
    m = w.size
    truth = rng.integers(num_classes, size=num_tasks)
    if workers_per_task is None:
        r = m
        chosen = np.broadcast_to(np.arange(m), (num_tasks, m))
    else:
        r = workers_per_task
        chosen = np.argsort(rng.random((num_tasks, m)), axis=1)[:, :r]
    correct = rng.random((num_tasks, r)) < w[chosen]
    offset = rng.integers(1, num_classes, size=(num_tasks, r))
    labels = np.where(correct, truth[:, None], (truth[:, None] + offset) % num_classes)
    ptr = np.arange(0, num_tasks * r + 1, r, dtype=np.int64)
    stream = LabelStream(
        np.arange(num_tasks, dtype=np.int64),
        ptr,
        np.ascontiguousarray(chosen, dtype=np.int64).reshape(-1),
        labels.astype(np.int64).reshape(-1),
        num_classes,
    )
    return stream, truth


def _simulate(config: SimConfig) -> tuple[np.ndarray, LabelStream, np.ndarray]:
    qualities = generate_workers(config)
    _, label_rng = _rngs(config.seed)
    stream, truth = generate_labels(
        qualities, config.num_tasks, config.num_classes, label_rng, config.workers_per_task
    )
    return qualities, stream, truth


def synthetic_dataset(config: SimConfig, name: str = "synthetic") -> Dataset:
    """A labelled :class:`Dataset` drawn from ``config``, with full ground truth."""
    _, stream, truth = _simulate(config)
    return Dataset(
        stream=stream,
        truth=dict(enumerate(truth.tolist())),
        task_keys=[f"t{i}" for i in range(config.num_tasks)],
        worker_keys=[f"w{i}" for i in range(config.num_workers)],
        class_keys=[str(k) for k in range(config.num_classes)],
        name=name,
    )


def bound_curve(eps: float, num_tasks: int) -> np.ndarray:
    t = np.arange(1, num_tasks + 1)
    return eps / np.sqrt(t)


@dataclass
class SimTrace:
    true_qualities: np.ndarray
    estimates: np.ndarray  # (M, T): estimate after time-slice t = column + 1
    truth: np.ndarray
    labels: np.ndarray
    bound_curves: dict[float, np.ndarray]

    @property
    def num_tasks(self) -> int:
        return self.estimates.shape[1]

    @property
    def label_accuracy(self) -> float:
        return float(np.mean(self.labels == self.truth))


def quality_trace(
    stream: LabelStream, labels: np.ndarray, num_workers: int, hyper: Hyperparameters
) -> np.ndarray:
    """Rebuild every worker's running quality estimate from the one-pass labels."""
    t_count = len(stream)
    task_of = np.repeat(np.arange(t_count), np.diff(stream.ptr))
    hits = np.zeros((num_workers, t_count), dtype=np.int64)
    seen = np.zeros((num_workers, t_count), dtype=np.int64)
    hits[stream.workers, task_of] = stream.classes == labels[task_of]
    seen[stream.workers, task_of] = 1
    correct = np.cumsum(hits, axis=1)
    labeled = np.cumsum(seen, axis=1)
    denom = labeled + hyper.alpha + hyper.beta - 2.0
    safe = np.where(denom == 0.0, 1.0, denom)
    return np.where(denom == 0.0, 0.5, (correct + hyper.alpha - 1.0) / safe)


def run_convergence(config: SimConfig, epsilons: Sequence[float] = (1.0, 2.0)) -> SimTrace:
    qualities, stream, truth = _simulate(config)
    result = la_onepass(stream, config.hyper)
    estimates = quality_trace(stream, result.labels, config.num_workers, config.hyper)
    return SimTrace(
        true_qualities=qualities,
        estimates=estimates,
        truth=truth,
        labels=result.labels,
        bound_curves={float(e): bound_curve(e, config.num_tasks) for e in epsilons},
    )


@dataclass
class Coverage:
    epsilon: float
    coverage: float
    nominal: float


def coverage_check(
    trace: SimTrace,
    epsilons: Sequence[float] = (1.0, 2.0),
    reference: Literal["true", "final"] = "true",
) -> list[Coverage]:
    """Fraction of (worker, t) pairs in the last half of the run inside ``eps / sqrt(t)``.

    ``reference`` selects the centre of the band: the true qualities or the
    final estimates.
    """
    t_total = trace.num_tasks
    if t_total < 100:
        raise ValueError(f"coverage needs at least 100 time-slices, got {t_total}")
    if reference == "true":
        centre = trace.true_qualities
    elif reference == "final":
        centre = trace.estimates[:, -1]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    start = t_total // 2
    t = np.arange(start + 1, t_total + 1)
    err = np.abs(trace.estimates[:, start:] - centre[:, None])
    out = []
    for eps in epsilons:
        inside = err <= eps / np.sqrt(t)[None, :]
        out.append(Coverage(float(eps), float(inside.mean()), normal_coverage(eps)))
    return out


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    m, t_total = trace.estimates.shape
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "worker_id", "estimate", "true_quality"))
        truth = [f"{q:.12g}" for q in trace.true_qualities]
        for t in range(t_total):
            col = trace.estimates[:, t]
            for i in range(m):
                w.writerow((t + 1, i, f"{col[i]:.12g}", truth[i]))


def write_bounds_csv(trace: SimTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "epsilon", "bound"))
        for eps, curve in trace.bound_curves.items():
            for t, b in enumerate(curve, start=1):
                w.writerow((t, f"{eps:g}", f"{b:.12g}"))
