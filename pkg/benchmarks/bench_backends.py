"""Time the numba and numpy kernels on synthetic label streams.

    python benchmarks/bench_backends.py --tasks 10000 100000 --per-task 10
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from streamagg import _kernels
from streamagg.simulation import generate_labels


def best_of(fn, repeats: int) -> float:
    fn()  # warm-up, includes JIT compile on the first call
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_calls(impl, stream, num_workers, k):
    def onepass():
        c = np.zeros(num_workers, dtype=np.int64)
        n = np.zeros(num_workers, dtype=np.int64)
        impl["onepass"](stream.ptr, stream.workers, stream.classes, c, n, 2.0, 2.0, k)

    weights = np.random.default_rng(0).uniform(-1, k - 1, num_workers)
    return {
        "onepass": onepass,
        "vote": lambda: impl["vote"](stream.ptr, stream.workers, stream.classes, weights, k),
        "count_vote": lambda: impl["count_vote"](stream.ptr, stream.classes, k),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tasks", type=int, nargs="+", default=[10_000, 100_000])
    p.add_argument("--per-task", type=int, default=10, help="labels per task")
    p.add_argument("--workers", type=int, default=200)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    q = np.random.default_rng(args.seed).uniform(0.4, 0.9, args.workers)
    backends = sorted(_kernels.IMPLEMENTATIONS)
    print(f"{'tasks':>8} {'labels':>9} {'kernel':>10} " + " ".join(f"{b + ' ms':>10}" for b in backends))
    for t in args.tasks:
        stream, _ = generate_labels(q, t, args.classes, args.seed, workers_per_task=args.per_task)
        timings = {
            b: {name: best_of(fn, args.repeats) for name, fn in
                kernel_calls(_kernels.IMPLEMENTATIONS[b], stream, args.workers, args.classes).items()}
            for b in backends
        }
        for name in ("onepass", "vote", "count_vote"):
            cells = " ".join(f"{timings[b][name] * 1e3:10.3f}" for b in backends)
            print(f"{t:8d} {stream.num_labels:9d} {name:>10} {cells}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
