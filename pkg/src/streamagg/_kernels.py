"""Array kernels over packed (CSR-style) label streams.

A label stream is three arrays: ``ptr`` (length T+1, task boundaries),
``workers`` and ``classes`` (length L, one entry per label). Worker indices
are dense slots into the count arrays owned by the caller.

Two implementations exist for each kernel: a numba ``@njit`` scalar loop and
a numpy fallback. Set ``STREAMAGG_DISABLE_NUMBA=1`` (or run without numba
installed) to select the fallback. Both accumulate class scores in record
order, so they return bit-identical results.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("STREAMAGG_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# numpy fallback


def _onepass_numpy(ptr, workers, classes, correct, labeled, alpha, beta, num_classes):
    n_tasks = ptr.size - 1
    out = np.empty(n_tasks, dtype=np.int64)
    for t in range(n_tasks):
        s, e = ptr[t], ptr[t + 1]
        ws = workers[s:e]
        cs = classes[s:e]
        denom = labeled[ws] + alpha + beta - 2.0
        safe = np.where(denom == 0.0, 1.0, denom)
        q = np.where(denom == 0.0, 0.5, (correct[ws] + alpha - 1.0) / safe)
        scores = np.bincount(cs, weights=q, minlength=num_classes)
        y = int(np.argmax(scores))
        out[t] = y
        correct[ws] += cs == y
        labeled[ws] += 1
    return out


def _vote_numpy(ptr, workers, classes, weights, num_classes):
    n_tasks = ptr.size - 1
    if n_tasks == 0:
        return np.empty(0, dtype=np.int64)
    task_of = np.repeat(np.arange(n_tasks), np.diff(ptr))
    flat = np.bincount(
        task_of * num_classes + classes,
        weights=weights[workers],
        minlength=n_tasks * num_classes,
    )
    return np.argmax(flat.reshape(n_tasks, num_classes), axis=1).astype(np.int64)


def _count_vote_numpy(ptr, classes, num_classes):
    n_tasks = ptr.size - 1
    if n_tasks == 0:
        return np.empty(0, dtype=np.int64)
    task_of = np.repeat(np.arange(n_tasks), np.diff(ptr))
    flat = np.bincount(task_of * num_classes + classes, minlength=n_tasks * num_classes)
    return np.argmax(flat.reshape(n_tasks, num_classes), axis=1).astype(np.int64)


def _lookup_numpy(workers, table, out, unseen):
    np.take(table, workers, out=out)
    missing = out < 0
    unseen[workers[missing]] = True
    return int(np.count_nonzero(missing))


# --------------------------------------------------------------------------
# numba


def _onepass_loop(ptr, workers, classes, correct, labeled, alpha, beta, num_classes):
    n_tasks = ptr.size - 1
    out = np.empty(n_tasks, dtype=np.int64)
    scores = np.empty(num_classes)
    for t in range(n_tasks):
        s = ptr[t]
        e = ptr[t + 1]
        scores[:] = 0.0
        for j in range(s, e):
            w = workers[j]
            denom = labeled[w] + alpha + beta - 2.0
            if denom == 0.0:
                q = 0.5
            else:
                q = (correct[w] + alpha - 1.0) / denom
            scores[classes[j]] += q
        y = 0
        best = scores[0]
        for k in range(1, num_classes):
            if scores[k] > best:
                best = scores[k]
                y = k
        out[t] = y
        for j in range(s, e):
            w = workers[j]
            # branchless: agreement with y is close to a coin flip
            correct[w] += classes[j] == y
            labeled[w] += 1
    return out


def _vote_loop(ptr, workers, classes, weights, num_classes):
    n_tasks = ptr.size - 1
    out = np.empty(n_tasks, dtype=np.int64)
    scores = np.empty(num_classes)
    for t in range(n_tasks):
        scores[:] = 0.0
        for j in range(ptr[t], ptr[t + 1]):
            scores[classes[j]] += weights[workers[j]]
        y = 0
        best = scores[0]
        for k in range(1, num_classes):
            if scores[k] > best:
                best = scores[k]
                y = k
        out[t] = y
    return out


def _count_vote_loop(ptr, classes, num_classes):
    n_tasks = ptr.size - 1
    out = np.empty(n_tasks, dtype=np.int64)
    counts = np.empty(num_classes, dtype=np.int64)
    for t in range(n_tasks):
        counts[:] = 0
        for j in range(ptr[t], ptr[t + 1]):
            counts[classes[j]] += 1
        y = 0
        best = counts[0]
        for k in range(1, num_classes):
            if counts[k] > best:
                best = counts[k]
                y = k
        out[t] = y
    return out


def _lookup_loop(workers, table, out, unseen):
    missing = 0
    for j in range(workers.size):
        slot = table[workers[j]]
        out[j] = slot
        if slot < 0:
            unseen[workers[j]] = True
            missing += 1
    return missing


IMPLEMENTATIONS = {
    "numpy": {
        "onepass": _onepass_numpy,
        "vote": _vote_numpy,
        "count_vote": _count_vote_numpy,
        "lookup": _lookup_numpy,
    }
}

if numba is not None:
    IMPLEMENTATIONS["numba"] = {
        "onepass": numba.njit(cache=True, nogil=True)(_onepass_loop),
        "vote": numba.njit(cache=True, nogil=True)(_vote_loop),
        "count_vote": numba.njit(cache=True, nogil=True)(_count_vote_loop),
        "lookup": numba.njit(cache=True, nogil=True)(_lookup_loop),
    }

BACKEND = "numba" if numba is not None and not _DISABLED else "numpy"

_active = IMPLEMENTATIONS[BACKEND]


def onepass_sweep(ptr, workers, classes, correct, labeled, alpha, beta, num_classes):
    """Stream tasks through the quality-weighted vote, updating counts in place.

    ``correct`` and ``labeled`` are int64 arrays indexed by worker slot. They
    hold the state on entry and are advanced task by task. Returns the
    estimated class of every task.
    """
    return _active["onepass"](
        ptr, workers, classes, correct, labeled, float(alpha), float(beta), int(num_classes)
    )


def vote_sweep(ptr, workers, classes, weights, num_classes):
    """Weighted vote per task with fixed per-slot weights (no state change)."""
    return _active["vote"](ptr, workers, classes, weights, int(num_classes))


def count_vote_sweep(ptr, classes, num_classes):
    """Unweighted majority vote per task."""
    return _active["count_vote"](ptr, classes, int(num_classes))


def lookup_slots(workers, table):
    """``table[workers]``, plus a mask over ids of the workers with no slot yet (``None`` if all have one)."""
    out = np.empty(workers.size, dtype=np.int64)
    unseen = np.zeros(table.size, dtype=np.bool_)
    missing = _active["lookup"](workers, table, out, unseen)
    return out, (unseen if missing else None)
