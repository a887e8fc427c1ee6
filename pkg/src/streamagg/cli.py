"""``streamagg`` command line: aggregate, simulate, bench."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, simulation
from .aggregators import la_onepass, la_twopass, majority_vote
from .ingestion import DataFormatError, discover_datasets, load_dataset, shuffle_tasks
from .model import Hyperparameters

EXIT_OK, EXIT_INPUT = 0, 1


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    pass


def _add_prior(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=2.0, help="Beta prior pseudo-count of correct labels")
    p.add_argument("--beta", type=float, default=2.0, help="Beta prior pseudo-count of incorrect labels")


def _methods(text: str) -> list[str]:
    methods = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in methods if m not in bench.METHODS]
    if bad or not methods:
        raise argparse.ArgumentTypeError(
            f"unknown method(s) {', '.join(bad) or '(none)'}; valid methods: {', '.join(bench.METHODS)}"
        )
    return methods


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamagg",
        description="Streaming crowd label aggregation (majority vote, one-pass, two-pass).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="aggregate one label file", formatter_class=_Formatter)
    p.add_argument("--labels", required=True, help="label CSV (question,worker,answer)")
    p.add_argument("--truth", default=None, help="truth CSV (question,truth); prints accuracy")
    p.add_argument("--method", choices=bench.METHODS, default="twopass", help="aggregation method")
    p.add_argument("--num-classes", type=_positive, default=None, help="declared K (inferred when omitted)")
    _add_prior(p)
    p.add_argument("--seed", type=int, default=0, help="task-order seed, used with --shuffle")
    p.add_argument("--shuffle", action="store_true", help="shuffle task order with --seed (default: file order)")
    p.add_argument("--output", default="-", help="estimates output path ('-' for stdout)")
    p.add_argument("--qualities", default=None, help="optional worker,quality CSV path (csv format)")
    p.add_argument("--format", choices=("json", "csv"), default="csv", help="estimates output format")
    p.set_defaults(func=cmd_aggregate, subparser=p)

    p = sub.add_parser("simulate", help="synthetic quality-convergence run", formatter_class=_Formatter)
    p.add_argument("-M", "--workers", type=_positive, default=20, help="number of workers")
    p.add_argument("-T", "--tasks", type=_positive, default=1000, help="number of tasks")
    p.add_argument("-K", "--classes", type=int, default=4, help="number of classes (>= 2)")
    p.add_argument("--quality", type=float, default=0.6, help="common true worker quality")
    p.add_argument(
        "--quality-range", type=float, nargs=2, metavar=("LO", "HI"), default=None,
        help="sample each worker's quality uniformly from [LO, HI] instead of --quality",
    )
    _add_prior(p)
    p.add_argument("--seed", type=int, default=0, help="simulation seed")
    p.add_argument("--epsilons", type=float, nargs="+", default=[1.0, 2.0], help="band widths eps in eps/sqrt(t)")
    p.add_argument("--output", default="trace.csv", help="trace CSV (t,worker_id,estimate,true_quality)")
    p.add_argument("--bounds", default=None, help="bounds CSV path (default: <output stem>_bounds.csv)")
    p.set_defaults(func=cmd_simulate, subparser=p)

    p = sub.add_parser(
        "bench", help="offline or online benchmark over dataset directories", formatter_class=_Formatter,
        description="Run seeds are --seed + run_index for run_index in [0, --shuffles).",
    )
    p.add_argument("--datasets", nargs="+", required=True, help="dataset directories or a directory of them")
    p.add_argument("--methods", type=_methods, default=list(bench.METHODS), help="comma-separated: mv,onepass,twopass")
    p.add_argument("--shuffles", type=_positive, default=10, help="shuffled runs per (dataset, method)")
    p.add_argument("--seed", type=int, default=0, help="base seed")
    p.add_argument("--online", action="store_true", help="chunked online protocol")
    p.add_argument("--chunks", type=_positive, default=10, help="chunks per dataset in --online mode")
    _add_prior(p)
    p.add_argument("--output", default="bench.json", help="report path")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    p.add_argument("--jobs", type=_positive, default=1, help="parallel (dataset, method) cells; 1 keeps timing stable")
    p.add_argument("--no-timing", action="store_true", help="omit wall times so output is byte-reproducible")
    p.set_defaults(func=cmd_bench, subparser=p)
    return parser


def _hyper(args, parser) -> Hyperparameters:
    try:
        return Hyperparameters(args.alpha, args.beta)
    except ValueError as exc:
        parser.error(str(exc))


def _open_out(path: str):
    if path == "-":
        return sys.stdout
    return open(path, "w", newline="", encoding="utf-8")


def cmd_aggregate(args, parser) -> int:
    hyper = _hyper(args, parser)
    dataset = load_dataset(args.labels, args.truth, args.num_classes)
    if args.shuffle:
        dataset = shuffle_tasks(dataset, args.seed)
    stream = dataset.stream
    if args.method == "mv":
        result = majority_vote(stream)
    elif args.method == "onepass":
        result = la_onepass(stream, hyper)
    else:
        result = la_twopass(stream, hyper)

    acc = bench.result_accuracy(result, dataset) if dataset.truth else None
    order = np.argsort(result.task_ids, kind="stable")
    rows = [
        (dataset.task_keys[t], dataset.class_keys[y])
        for t, y in zip(result.task_ids[order].tolist(), result.labels[order].tolist())
    ]
    quals = [(dataset.worker_keys[w], q) for w, q in zip(result.worker_ids.tolist(), result.qualities.tolist())]

    fh = _open_out(args.output)
    try:
        if args.format == "json":
            doc = {
                "method": args.method,
                "labels": dict(rows),
                "qualities": {w: q for w, q in quals},
                "accuracy": acc,
            }
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("question", "answer"))
            w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.qualities:
        with open(args.qualities, "w", newline="", encoding="utf-8") as qf:
            w = csv.writer(qf, lineterminator="\n")
            w.writerow(("worker", "quality"))
            w.writerows((k, f"{q:.12g}") for k, q in quals)
    if acc is not None:
        print(f"accuracy: {acc:.4f}", file=sys.stderr if args.output == "-" else sys.stdout)
    return EXIT_OK


def cmd_simulate(args, parser) -> int:
    hyper = _hyper(args, parser)
    try:
        config = simulation.SimConfig(
            num_workers=args.workers,
            num_tasks=args.tasks,
            num_classes=args.classes,
            quality=None if args.quality_range else args.quality,
            quality_range=tuple(args.quality_range) if args.quality_range else None,
            seed=args.seed,
            hyper=hyper,
        )
    except ValueError as exc:
        parser.error(str(exc))
    trace = simulation.run_convergence(config, args.epsilons)
    out = Path(args.output)
    bounds = Path(args.bounds) if args.bounds else out.with_name(out.stem + "_bounds.csv")
    simulation.write_trace_csv(trace, out)
    simulation.write_bounds_csv(trace, bounds)
    err = np.abs(trace.estimates[:, -1] - trace.true_qualities)
    print(f"label accuracy: {trace.label_accuracy:.4f}")
    print(f"final |estimate - true|: mean {err.mean():.4f}, max {err.max():.4f}")
    if config.num_tasks >= 100:
        vs_final = simulation.coverage_check(trace, args.epsilons, reference="final")
        for c, f in zip(simulation.coverage_check(trace, args.epsilons), vs_final):
            print(
                f"coverage eps={c.epsilon:g}: {c.coverage:.4f} vs true, "
                f"{f.coverage:.4f} vs final (normal {c.nominal:.4f})"
            )
    return EXIT_OK


def _load_all(paths: list[str]):
    datasets = []
    for p in paths:
        found = discover_datasets(p)
        if not found:
            raise FileNotFoundError(f"no dataset (answer.csv/label.csv) found under {p}")
        for name, (labels, truth) in found.items():
            datasets.append(load_dataset(labels, truth, name=name))
    return datasets


def cmd_bench(args, parser) -> int:
    hyper = _hyper(args, parser)
    datasets = _load_all(args.datasets)
    missing = [d.name for d in datasets if not d.truth]
    if missing:
        raise DataFormatError(f"datasets without truth.csv: {', '.join(missing)}")
    common = dict(
        methods=args.methods, shuffles=args.shuffles, base_seed=args.seed,
        hyper=hyper, timing=not args.no_timing, jobs=args.jobs,
    )
    if args.online:
        reports = bench.online_benchmark(datasets, num_chunks=args.chunks, **common)
    else:
        reports = bench.benchmark(datasets, **common)
    (bench.write_json if args.format == "json" else bench.write_csv)(reports, args.output)
    for r in reports:
        print(f"{r.dataset:>12} {r.method:>8} {r.mode:>7} acc={r.mean_accuracy:.4f}"
              + ("" if r.lg_sec is None else f" lg(sec)={r.lg_sec:.3f}"))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, args.subparser)
    except (OSError, ValueError, KeyError) as exc:
        print(f"streamagg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
