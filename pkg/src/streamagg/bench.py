"""Accuracy, runtime and significance reporting over shuffled and chunked runs."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm, rankdata

from .aggregators import AggregationResult, LabelStream, la_onepass, la_twopass, majority_vote, online_aggregate
from .ingestion import Dataset, shuffle_tasks
from .model import Hyperparameters

METHODS = ("mv", "onepass", "twopass")

# n at or below which the signed-rank p-value uses the exact null distribution
EXACT_MAX_N = 50


@dataclass
class RunReport:
    dataset: str
    method: str
    accuracies: list[float]
    mean_accuracy: float
    seconds: float | None
    lg_sec: float | None
    mode: str = "offline"
    chunk_accuracies: list[float | None] | None = None
    seeds: list[int] = field(default_factory=list)
    run_seconds: list[float] | None = None


def accuracy(estimates: Mapping[int, int], truth: Mapping[int, int]) -> float:
    """Fraction of ground-truth tasks whose estimate matches."""
    if not truth:
        raise ValueError("truth is empty")
    hits = 0
    for task, y in truth.items():
        if task not in estimates:
            raise KeyError(f"task {task} has ground truth but no estimate")
        hits += estimates[task] == y
    return hits / len(truth)


def result_accuracy(result: AggregationResult, dataset: Dataset) -> float:
    """Vectorised :func:`accuracy` for dense task ids."""
    truth_tasks, truth_labels = dataset.truth_arrays()
    if truth_tasks.size == 0:
        raise ValueError("truth is empty")
    by_task = np.full(dataset.num_tasks, -1, dtype=np.int64)
    by_task[result.task_ids] = result.labels
    est = by_task[truth_tasks]
    if np.any(est < 0):
        missing = int(truth_tasks[np.argmax(est < 0)])
        raise KeyError(f"task {missing} has ground truth but no estimate")
    return float(np.mean(est == truth_labels))


# --------------------------------------------------------------------------
# Wilcoxon signed-rank


def _exact_upper_tail(doubled_ranks: np.ndarray, w2: int) -> float:
    # null distribution of the doubled statistic over all 2^n sign patterns
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.tolist():
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return float(counts[w2:].sum() / 2.0 ** doubled_ranks.size)


def wilcoxon_one_sided(
    method_acc: Sequence[float], baseline_acc: Sequence[float]
) -> tuple[float, float]:
    """One-sided signed-rank test of ``method > baseline``.

    Zero differences are dropped and tied magnitudes get average ranks.
    ``W`` is the rank sum of positive differences. The p-value is exact for up
    to ``EXACT_MAX_N`` informative pairs and otherwise uses the normal
    approximation with tie and continuity corrections. Differences are rounded
    to 12 decimals first so that decimal-equal gaps tie exactly.
    """
    a = np.asarray(method_acc, dtype=float)
    b = np.asarray(baseline_acc, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("method and baseline accuracies must be equal-length vectors")
    if a.size < 5:
        raise ValueError(f"need at least 5 pairs, got {a.size}")
    d = np.round(a - b, 12)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise ValueError("no informative pairs")
    ranks = rankdata(np.abs(d))
    w = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        return w, _exact_upper_tail(doubled, int(round(2 * w)))
    _, ties = np.unique(np.abs(d), return_counts=True)
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties**3 - ties)) / 48.0
    z = (w - mean - 0.5) / math.sqrt(var)
    return w, float(norm.sf(z))


# --------------------------------------------------------------------------
# runs


def _aggregate(method: str, stream: LabelStream, hyper: Hyperparameters) -> AggregationResult:
    if method == "mv":
        return majority_vote(stream)
    if method == "onepass":
        return la_onepass(stream, hyper)
    if method == "twopass":
        return la_twopass(stream, hyper)
    raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")


def _lg(seconds: float) -> float:
    return math.log10(max(seconds, 1e-9))


def _timed(fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t0


def run_offline(
    dataset: Dataset,
    method: str,
    shuffles: int = 10,
    base_seed: int = 0,
    hyper: Hyperparameters | None = None,
    timing: bool = True,
) -> RunReport:
    hyper = hyper or Hyperparameters()
    seeds = [base_seed] if method == "mv" else list(range(base_seed, base_seed + shuffles))
    accs, secs = [], []
    for seed in seeds:
        data = dataset if method == "mv" else shuffle_tasks(dataset, seed)
        result, sec = _timed(_aggregate, method, data.stream, hyper)
        accs.append(result_accuracy(result, data))
        secs.append(sec)
    total = float(sum(secs))
    return RunReport(
        dataset=dataset.name,
        method=method,
        accuracies=accs,
        mean_accuracy=float(np.mean(accs)),
        seconds=total if timing else None,
        lg_sec=_lg(total) if timing else None,
        seeds=seeds,
        run_seconds=secs if timing else None,
    )


def chunk_sizes(num_tasks: int, num_chunks: int) -> list[int]:
    """Near-equal split; the first ``num_tasks % num_chunks`` chunks get one extra."""
    if not 1 <= num_chunks <= num_tasks:
        raise ValueError(f"num_chunks must be in [1, {num_tasks}], got {num_chunks}")
    base, extra = divmod(num_tasks, num_chunks)
    return [base + (i < extra) for i in range(num_chunks)]


def split_chunks(stream: LabelStream, num_chunks: int) -> list[LabelStream]:
    bounds = np.concatenate([[0], np.cumsum(chunk_sizes(len(stream), num_chunks))])
    return [stream.slice(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]


def _online_run(
    method: str, chunks: list[LabelStream], hyper: Hyperparameters
) -> list[AggregationResult]:
    if method == "mv":
        return [majority_vote(c) for c in chunks]
    if method in ("onepass", "twopass"):
        return online_aggregate(chunks, hyper, mode=method)
    raise ValueError(f"unknown method {method!r}; valid methods: {', '.join(METHODS)}")


def cumulative_accuracies(results: Sequence[AggregationResult], dataset: Dataset) -> list[float | None]:
    truth_tasks, truth_labels = dataset.truth_arrays()
    truth_by_task = np.full(dataset.num_tasks, -1, dtype=np.int64)
    truth_by_task[truth_tasks] = truth_labels
    hits = seen = 0
    out: list[float | None] = []
    for r in results:
        t = truth_by_task[r.task_ids]
        has = t >= 0
        seen += int(has.sum())
        hits += int(np.sum(r.labels[has] == t[has]))
        out.append(hits / seen if seen else None)
    return out


def run_online(
    dataset: Dataset,
    method: str,
    num_chunks: int = 10,
    shuffles: int = 10,
    base_seed: int = 0,
    hyper: Hyperparameters | None = None,
    timing: bool = True,
) -> RunReport:
    hyper = hyper or Hyperparameters()
    seeds = list(range(base_seed, base_seed + shuffles))
    curves, finals, secs = [], [], []
    for seed in seeds:
        data = shuffle_tasks(dataset, seed)
        chunks = split_chunks(data.stream, num_chunks)
        results, sec = _timed(_online_run, method, chunks, hyper)
        curve = cumulative_accuracies(results, data)
        curves.append(curve)
        finals.append(curve[-1])
        secs.append(sec)
    mean_curve: list[float | None] = []
    for k in range(num_chunks):
        vals = [c[k] for c in curves if c[k] is not None]
        mean_curve.append(float(np.mean(vals)) if vals else None)
    total = float(sum(secs))
    return RunReport(
        dataset=dataset.name,
        method=method,
        accuracies=finals,
        mean_accuracy=float(np.mean(finals)),
        seconds=total if timing else None,
        lg_sec=_lg(total) if timing else None,
        mode="online",
        chunk_accuracies=mean_curve,
        seeds=seeds,
        run_seconds=secs if timing else None,
    )


def _cell(args):
    kind, dataset, method, kwargs = args
    return (run_online if kind == "online" else run_offline)(dataset, method, **kwargs)


def _run_cells(cells, jobs: int) -> list[RunReport]:
    if jobs <= 1:
        return [_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_cell, cells))


def _check_methods(methods: Sequence[str]) -> None:
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ValueError(f"unknown method(s) {', '.join(bad)}; valid methods: {', '.join(METHODS)}")


def benchmark(
    datasets: Sequence[Dataset],
    methods: Sequence[str] = METHODS,
    shuffles: int = 10,
    base_seed: int = 0,
    hyper: Hyperparameters | None = None,
    timing: bool = True,
    jobs: int = 1,
) -> list[RunReport]:
    """Offline protocol: each method over ``shuffles`` seeded task orders.

    MV is order-invariant and runs once per dataset. Seeds are
    ``base_seed .. base_seed + shuffles - 1``.
    """
    _check_methods(methods)
    kwargs = dict(shuffles=shuffles, base_seed=base_seed, hyper=hyper, timing=timing)
    return _run_cells([("offline", d, m, kwargs) for d in datasets for m in methods], jobs)


def online_benchmark(
    datasets: Sequence[Dataset],
    methods: Sequence[str] = METHODS,
    num_chunks: int = 10,
    shuffles: int = 10,
    base_seed: int = 0,
    hyper: Hyperparameters | None = None,
    timing: bool = True,
    jobs: int = 1,
) -> list[RunReport]:
    """Online protocol: shuffled tasks split into ``num_chunks`` contiguous chunks."""
    _check_methods(methods)
    kwargs = dict(
        num_chunks=num_chunks, shuffles=shuffles, base_seed=base_seed, hyper=hyper, timing=timing
    )
    return _run_cells([("online", d, m, kwargs) for d in datasets for m in methods], jobs)


# --------------------------------------------------------------------------
# output


def write_json(reports: Sequence[RunReport], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)
        fh.write("\n")


def write_csv(reports: Sequence[RunReport], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("dataset", "method", "seed", "accuracy", "seconds", "lg_sec"))
        for r in reports:
            for i, (seed, acc) in enumerate(zip(r.seeds, r.accuracies)):
                sec = r.run_seconds[i] if r.run_seconds else None
                w.writerow(
                    (
                        r.dataset,
                        r.method,
                        seed,
                        f"{acc:.10g}",
                        "" if sec is None else f"{sec:.6g}",
                        "" if sec is None else f"{_lg(sec):.6g}",
                    )
                )
