"""Reading crowdsourced label files into dense, task-grouped label streams.

Label files are UTF-8 CSV with header ``question,worker,answer``; truth files
use ``question,truth``. Keys are re-indexed densely: tasks by first
appearance in the file, workers by first appearance once labels are grouped
by task, classes by integer value when every class key is a
non-negative integer (otherwise by first appearance).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .aggregators import LabelStream
from .model import TaskBatch

log = logging.getLogger(__name__)

LABEL_HEADER = ("question", "worker", "answer")
TRUTH_HEADER = ("question", "truth")
LABEL_FILENAMES = ("answer.csv", "label.csv", "labels.csv")
TRUTH_FILENAMES = ("truth.csv",)


class DataFormatError(ValueError):
    pass


class RawRecord(NamedTuple):
    task_key: str
    worker_key: str
    label_key: str


def _read_rows(path: str | Path, header: tuple[str, ...]) -> list[tuple[int, list[str]]]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip().lower() for c in first) != header:
            raise DataFormatError(f"{path}: unrecognized label file header {first!r}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}, line {reader.line_num}: expected {len(header)} columns, got {len(row)}"
                )
            cells = [c.strip() for c in row]
            if not all(cells):
                raise DataFormatError(f"{path}, line {reader.line_num}: empty field")
            rows.append((reader.line_num, cells))
    return rows


def parse_labels(path: str | Path) -> list[RawRecord]:
    """Read a label file; repeated (task, worker) pairs keep their first row."""
    seen: set[tuple[str, str]] = set()
    records = []
    duplicates = 0
    for _, (task, worker, answer) in _read_rows(path, LABEL_HEADER):
        if (task, worker) in seen:
            duplicates += 1
            continue
        seen.add((task, worker))
        records.append(RawRecord(task, worker, answer))
    if duplicates:
        log.warning("%s: dropped %d duplicate (task, worker) labels", path, duplicates)
    return records


def parse_truth(path: str | Path) -> dict[str, str]:
    truth: dict[str, str] = {}
    for line, (task, label) in _read_rows(path, TRUTH_HEADER):
        if task in truth:
            log.warning("%s, line %d: repeated truth for task %r ignored", path, line, task)
            continue
        truth[task] = label
    return truth


@dataclass
class Dataset:
    stream: LabelStream
    truth: dict[int, int]
    task_keys: list[str]
    worker_keys: list[str]
    class_keys: list[str]
    name: str = ""
    dropped_truth: int = 0

    @property
    def num_classes(self) -> int:
        return self.stream.num_classes

    @property
    def num_tasks(self) -> int:
        return len(self.stream)

    @property
    def num_workers(self) -> int:
        return len(self.worker_keys)

    @property
    def num_labels(self) -> int:
        return self.stream.num_labels

    @property
    def batches(self) -> list[TaskBatch]:
        return self.stream.batches()

    def truth_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        tasks = np.fromiter(self.truth.keys(), dtype=np.int64, count=len(self.truth))
        labels = np.fromiter(self.truth.values(), dtype=np.int64, count=len(self.truth))
        return tasks, labels


def _is_index(key: str) -> bool:
    return key.isdigit()


def _class_alphabet(label_keys: Sequence[str], truth_keys: Sequence[str]) -> list[str]:
    keys = list(dict.fromkeys(label_keys))
    if all(_is_index(k) for k in keys) and all(_is_index(k) for k in truth_keys):
        # numeric alphabets: union with truth, ordered by value
        return sorted(set(keys) | set(truth_keys), key=int)
    extra = set(truth_keys) - set(keys)
    if extra:
        raise DataFormatError(
            f"truth class outside label alphabet: {sorted(extra)[:5]}"
        )
    return keys


def build_dataset(
    records: Sequence[RawRecord],
    truth: Mapping[str, str] | None = None,
    declared_k: int | None = None,
    name: str = "",
) -> Dataset:
    """Densely re-index records, group them by task, and attach usable truth.

    Truth entries whose task received no labels are dropped and counted in
    ``dropped_truth``.
    """
    if not records:
        raise DataFormatError("no label records")
    truth = dict(truth or {})

    task_index: dict[str, int] = {}
    tasks = np.fromiter(
        (task_index.setdefault(r.task_key, len(task_index)) for r in records),
        dtype=np.int64,
        count=len(records),
    )
    # group by task (first-appearance order, stable within a task); workers
    # are then numbered by first appearance in this grouped order
    order = np.argsort(tasks, kind="stable")
    grouped = [records[i] for i in order.tolist()]
    worker_index: dict[str, int] = {}
    workers = np.fromiter(
        (worker_index.setdefault(r.worker_key, len(worker_index)) for r in grouped),
        dtype=np.int64,
        count=len(grouped),
    )

    usable = {t: y for t, y in truth.items() if t in task_index}
    dropped = len(truth) - len(usable)
    if dropped:
        log.info("dropped %d truth entries for tasks without labels", dropped)

    label_keys = [r.label_key for r in grouped]
    if declared_k is not None:
        observed = list(dict.fromkeys(label_keys + list(usable.values())))
        if all(_is_index(k) for k in observed) and max(int(k) for k in observed) < declared_k:
            alphabet = [str(k) for k in range(declared_k)]
        else:
            alphabet = _class_alphabet(label_keys, list(usable.values()))
            if len(alphabet) > declared_k:
                raise DataFormatError(
                    f"{len(alphabet)} distinct classes observed but K={declared_k} declared"
                )
    else:
        alphabet = _class_alphabet(label_keys, list(usable.values()))
    class_index = {k: i for i, k in enumerate(alphabet)}
    num_classes = declared_k if declared_k is not None else len(alphabet)
    classes = np.fromiter((class_index[k] for k in label_keys), dtype=np.int64, count=len(records))

    counts = np.bincount(tasks, minlength=len(task_index))
    ptr = np.zeros(len(task_index) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    stream = LabelStream(
        np.arange(len(task_index), dtype=np.int64),
        ptr,
        workers,
        classes,
        int(num_classes),
    )
    return Dataset(
        stream=stream,
        truth={task_index[t]: class_index[y] for t, y in usable.items()},
        task_keys=list(task_index),
        worker_keys=list(worker_index),
        class_keys=alphabet,
        name=name,
        dropped_truth=dropped,
    )


def load_dataset(
    labels_path: str | Path,
    truth_path: str | Path | None = None,
    num_classes: int | None = None,
    name: str | None = None,
) -> Dataset:
    labels_path = Path(labels_path)
    if not labels_path.is_file():
        raise FileNotFoundError(f"label file not found: {labels_path}")
    truth = {}
    if truth_path is not None:
        truth_path = Path(truth_path)
        if not truth_path.is_file():
            raise FileNotFoundError(f"truth file not found: {truth_path}")
        truth = parse_truth(truth_path)
    return build_dataset(
        parse_labels(labels_path),
        truth,
        num_classes,
        name=name if name is not None else labels_path.parent.name,
    )


def export_dataset(dataset: Dataset, labels_path: str | Path, truth_path: str | Path | None = None) -> None:
    """Write labels (and truth) back out with dense integer keys."""
    s = dataset.stream
    with Path(labels_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_HEADER)
        for i, t in enumerate(s.task_ids.tolist()):
            for j in range(s.ptr[i], s.ptr[i + 1]):
                w.writerow((t, int(s.workers[j]), int(s.classes[j])))
    if truth_path is not None:
        with Path(truth_path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRUTH_HEADER)
            for t, y in dataset.truth.items():
                w.writerow((t, y))


def shuffle_tasks(dataset: Dataset, seed: int) -> Dataset:
    """Permute task order with numpy's PCG64 generator seeded by ``seed``.

    Truth and key maps are shared with the input; only the stream order
    changes.
    """
    perm = np.random.default_rng(seed).permutation(dataset.num_tasks)
    return replace(dataset, stream=dataset.stream.take(perm))


def discover_datasets(root: str | Path) -> dict[str, tuple[Path, Path | None]]:
    """Find ``<root>/<name>/{answer,label,labels}.csv`` (+ optional ``truth.csv``).

    ``root`` may itself be a dataset directory.
    """
    root = Path(root)
    found: dict[str, tuple[Path, Path | None]] = {}
    candidates = [root] + sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    for d in candidates:
        label = next((d / f for f in LABEL_FILENAMES if (d / f).is_file()), None)
        if label is None:
            continue
        truth = next((d / f for f in TRUTH_FILENAMES if (d / f).is_file()), None)
        found[d.name] = (label, truth)
    return found
