import csv

import numpy as np
import pytest
from scipy.stats import norm

from streamagg.aggregators import la_onepass
from streamagg.model import Hyperparameters
from streamagg.simulation import (
    NOMINAL_COVERAGE,
    SimConfig,
    coverage_check,
    generate_labels,
    generate_workers,
    normal_coverage,
    run_convergence,
    synthetic_dataset,
    write_bounds_csv,
    write_trace_csv,
)


def test_homogeneous_workers():
    assert generate_workers(SimConfig(num_workers=20, quality=0.6)).tolist() == [0.6] * 20


def test_degenerate_range():
    w = generate_workers(SimConfig(quality=None, quality_range=(0.5, 0.5)))
    assert np.all(w == 0.5)


def test_range_sample_mean():
    w = generate_workers(SimConfig(num_workers=10000, quality=None, quality_range=(0.4, 0.7), seed=3))
    assert w.min() >= 0.4 and w.max() <= 0.7
    assert abs(w.mean() - 0.55) <= 0.01


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_classes=1),
        dict(num_tasks=0),
        dict(quality=None),
        dict(quality=0.5, quality_range=(0.1, 0.2)),
        dict(quality=None, quality_range=(0.7, 0.4)),
        dict(quality=1.2),
    ],
)
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def labels_and_truth(stream, truth):
    r = np.diff(stream.ptr)[0]
    return stream.classes.reshape(-1, r), truth


def test_perfect_worker_always_right():
    labels, truth = labels_and_truth(*generate_labels(np.ones(3), 500, 4, seed=0))
    assert np.all(labels == truth[:, None])


def test_zero_quality_binary_worker_always_wrong():
    labels, truth = labels_and_truth(*generate_labels(np.zeros(2), 500, 2, seed=0))
    assert np.all(labels == 1 - truth[:, None])


def test_empirical_correct_fraction():
    labels, truth = labels_and_truth(*generate_labels(np.array([0.6]), 10000, 4, seed=11))
    assert abs(np.mean(labels[:, 0] == truth) - 0.6) <= 0.015


def test_wrong_labels_uniform_over_other_classes():
    labels, truth = labels_and_truth(*generate_labels(np.array([0.0]), 30000, 4, seed=5))
    offset = (labels[:, 0] - truth) % 4
    freq = np.bincount(offset, minlength=4) / offset.size
    assert freq[0] == 0
    np.testing.assert_allclose(freq[1:], 1 / 3, atol=0.015)


def test_sparse_labels_distinct_workers():
    stream, _ = generate_labels(np.full(10, 0.7), 200, 3, seed=1, workers_per_task=4)
    for b in stream.batches():
        assert len(b) == 4 and len(set(b.workers.tolist())) == 4


def test_trace_final_column_matches_aggregator():
    cfg = SimConfig(num_workers=8, num_tasks=300, num_classes=3, seed=4, workers_per_task=3)
    trace = run_convergence(cfg)
    ds = synthetic_dataset(cfg)
    res = la_onepass(ds.stream, cfg.hyper)
    assert res.labels.tolist() == trace.labels.tolist()
    final = trace.estimates[:, -1]
    np.testing.assert_array_equal(final[res.worker_ids], res.qualities)
    # workers never seen stay at the prior mode
    unseen = np.setdiff1d(np.arange(8), res.worker_ids)
    assert np.all(final[unseen] == 0.5)


def test_single_step_trace():
    trace = run_convergence(SimConfig(num_tasks=1, seed=2))
    # one update from Beta(2, 2): (C + 1) / 3 with C in {0, 1}
    assert set(np.round(trace.estimates[:, 0] * 3, 12).tolist()) <= {1.0, 2.0}


def test_runs_reproducible():
    a = run_convergence(SimConfig(seed=9, num_tasks=200))
    b = run_convergence(SimConfig(seed=9, num_tasks=200))
    assert a.estimates.tobytes() == b.estimates.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()


def test_estimates_and_bounds_well_formed():
    trace = run_convergence(SimConfig(num_tasks=200, seed=1))
    assert np.all((trace.estimates >= 0) & (trace.estimates <= 1))
    for curve in trace.bound_curves.values():
        assert np.all(np.diff(curve) < 0)


def test_single_run_converges():
    trace = run_convergence(SimConfig(seed=0))
    assert np.all(np.abs(trace.estimates[:, -1] - 0.6) <= 0.05)


def test_heterogeneous_run_converges():
    trace = run_convergence(SimConfig(quality=None, quality_range=(0.4, 0.7), seed=0))
    assert np.mean(np.abs(trace.estimates[:, -1] - trace.true_qualities)) <= 0.05


def test_normal_coverage_against_scipy():
    for eps in (0.1, 0.5, 1.0, 1.5, 2.0, 3.0):
        assert normal_coverage(eps) == pytest.approx(norm.cdf(eps) - norm.cdf(-eps), abs=1e-7)
    for eps, nominal in NOMINAL_COVERAGE.items():
        assert normal_coverage(eps) == pytest.approx(nominal, abs=1e-6)


def test_wide_band_covers_everything():
    trace = run_convergence(SimConfig(seed=3))
    (c,) = coverage_check(trace, [10.0])
    assert c.coverage == 1.0


def test_coverage_reference_final():
    trace = run_convergence(SimConfig(seed=3))
    res = coverage_check(trace, [1.0, 2.0], reference="final")
    assert all(0.0 <= c.coverage <= 1.0 for c in res)
    with pytest.raises(ValueError):
        coverage_check(trace, [1.0], reference="median")


def test_coverage_requires_long_run():
    with pytest.raises(ValueError):
        coverage_check(run_convergence(SimConfig(num_tasks=50)), [1.0])


def test_csv_exports(tmp_path):
    trace = run_convergence(SimConfig(num_workers=5, num_tasks=30, seed=1))
    write_trace_csv(trace, tmp_path / "trace.csv")
    write_bounds_csv(trace, tmp_path / "bounds.csv")
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert len(rows) == 5 * 30
    assert list(rows[0]) == ["t", "worker_id", "estimate", "true_quality"]
    assert float(rows[-1]["estimate"]) == pytest.approx(trace.estimates[4, 29])
    bounds = list(csv.DictReader(open(tmp_path / "bounds.csv")))
    assert len(bounds) == 2 * 30
    assert float(bounds[3]["bound"]) == pytest.approx(1 / 2)


def test_prior_affects_trace_start():
    trace = run_convergence(SimConfig(num_tasks=5, hyper=Hyperparameters(3, 1)))
    assert np.all(trace.estimates >= 0) and np.all(trace.estimates <= 1)
