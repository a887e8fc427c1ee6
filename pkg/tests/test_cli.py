import csv
import json

import pytest

from streamagg.cli import build_parser, main
from streamagg.ingestion import export_dataset
from streamagg.simulation import SimConfig, synthetic_dataset

HAND_TRACE = "question,worker,answer\nt1,A,1\nt1,B,1\nt1,C,2\nt2,A,2\nt2,B,1\nt2,C,1\n"


@pytest.fixture
def hand_trace(tmp_path):
    labels = tmp_path / "labels.csv"
    labels.write_text(HAND_TRACE)
    truth = tmp_path / "truth.csv"
    truth.write_text("question,truth\nt1,1\nt2,2\n")
    return labels, truth


@pytest.fixture
def data_dir(tmp_path):
    root = tmp_path / "data"
    for i, name in enumerate(("alpha", "beta")):
        d = root / name
        d.mkdir(parents=True)
        ds = synthetic_dataset(
            SimConfig(num_workers=12, num_tasks=60, num_classes=2, quality=None,
                      quality_range=(0.4, 0.9), seed=i, workers_per_task=5)
        )
        export_dataset(ds, d / "answer.csv", d / "truth.csv")
    return root


def read_rows(path):
    return list(csv.reader(open(path)))


@pytest.mark.parametrize("method, expected", [("mv", ["1", "1"]), ("onepass", ["1", "1"]), ("twopass", ["1", "1"])])
def test_aggregate_hand_trace(tmp_path, hand_trace, method, expected, capsys):
    labels, truth = hand_trace
    out = tmp_path / "est.csv"
    code = main(["aggregate", "--method", method, "--labels", str(labels), "--truth", str(truth), "--output", str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == ["question", "answer"]
    assert [r[1] for r in rows[1:]] == expected
    assert "accuracy: 0.5000" in capsys.readouterr().out


def test_aggregate_json_with_qualities(tmp_path, hand_trace):
    labels, _ = hand_trace
    out = tmp_path / "est.json"
    qual = tmp_path / "q.csv"
    assert main(["aggregate", "--method", "onepass", "--labels", str(labels), "--format", "json",
                 "--output", str(out), "--qualities", str(qual)]) == 0
    doc = json.loads(out.read_text())
    assert doc["labels"] == {"t1": "1", "t2": "1"}
    assert doc["qualities"] == {"A": 0.5, "B": 0.75, "C": 0.5}
    assert doc["accuracy"] is None
    assert read_rows(qual)[1:] == [["A", "0.5"], ["B", "0.75"], ["C", "0.5"]]


def test_aggregate_missing_file(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert main(["aggregate", "--labels", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


def test_aggregate_bad_header(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    assert main(["aggregate", "--labels", str(bad)]) == 1
    assert "unrecognized label file header" in capsys.readouterr().err


def test_aggregate_output_byte_identical(tmp_path, hand_trace):
    labels, truth = hand_trace
    outs = []
    for i in range(2):
        out = tmp_path / f"o{i}.json"
        main(["aggregate", "--labels", str(labels), "--truth", str(truth), "--shuffle", "--seed", "3",
              "--format", "json", "--output", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_simulate_writes_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    assert main(["simulate", "-M", "20", "-T", "1000", "-K", "4", "--quality", "0.6", "--seed", "1",
                 "--output", str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ["t", "worker_id", "estimate", "true_quality"]
    assert len(rows) - 1 == 20 * 1000
    bounds = read_rows(tmp_path / "trace_bounds.csv")
    assert bounds[0] == ["t", "epsilon", "bound"] and len(bounds) - 1 == 2 * 1000
    out_text = capsys.readouterr().out
    assert "coverage eps=1" in out_text and "vs true" in out_text and "vs final" in out_text


def test_simulate_quality_range(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["simulate", "-T", "200", "--quality-range", "0.4", "0.7", "--output", str(out)]) == 0
    truths = {r[3] for r in read_rows(out)[1:]}
    assert len(truths) == 20


def test_simulate_byte_identical(tmp_path):
    blobs = []
    for i in range(2):
        out = tmp_path / f"t{i}.csv"
        main(["simulate", "-T", "150", "--seed", "4", "--output", str(out)])
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "-T", "0"],
        ["simulate", "--quality-range", "0.8", "0.2"],
        ["simulate", "-K", "1"],
        ["simulate", "--alpha", "0.5"],
        ["bench", "--datasets", "x", "--methods", "ebcc"],
        ["aggregate", "--labels", "x", "--method", "ds"],
    ],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    if "ebcc" in argv:
        assert "mv, onepass, twopass" in capsys.readouterr().err


def test_bench_offline(tmp_path, data_dir):
    out = tmp_path / "r.json"
    assert main(["bench", "--methods", "mv,onepass,twopass", "--shuffles", "10", "--datasets", str(data_dir),
                 "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert {(r["dataset"], r["method"]) for r in doc} == {
        (d, m) for d in ("alpha", "beta") for m in ("mv", "onepass", "twopass")
    }
    assert all(r["mode"] == "offline" for r in doc)


def test_bench_online_csv(tmp_path, data_dir):
    out = tmp_path / "r.json"
    assert main(["bench", "--online", "--chunks", "10", "--shuffles", "2", "--datasets", str(data_dir / "alpha"),
                 "--output", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert all(len(r["chunk_accuracies"]) == 10 for r in doc)
    csv_out = tmp_path / "r.csv"
    assert main(["bench", "--shuffles", "2", "--datasets", str(data_dir), "--format", "csv",
                 "--output", str(csv_out)]) == 0
    assert read_rows(csv_out)[0] == ["dataset", "method", "seed", "accuracy", "seconds", "lg_sec"]


def test_bench_no_timing_byte_identical(tmp_path, data_dir):
    blobs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        main(["bench", "--shuffles", "3", "--no-timing", "--datasets", str(data_dir), "--output", str(out)])
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_bench_missing_dataset(tmp_path, capsys):
    assert main(["bench", "--datasets", str(tmp_path / "none")]) == 1
    assert "no dataset" in capsys.readouterr().err


def test_help_lists_defaults():
    parser = build_parser()
    minimal = {"aggregate": ["--labels", "x"], "simulate": [], "bench": ["--datasets", "x"]}
    sub = {name: parser.parse_args([name, *extra]).subparser for name, extra in minimal.items()}

    def option_help(name):
        # options section only, one entry per flag, wrapping undone
        body = sub[name].format_help().split("options:", 1)[1]
        entries = {}
        for chunk in body.split("\n  -")[1:]:
            flag = "-" + chunk.split()[0].rstrip(",")
            entries[flag] = " ".join(chunk.split())
        return entries

    for name in ("aggregate", "simulate", "bench"):
        for flag, text in option_help(name).items():
            if flag not in ("--help", "-h"):
                assert "(default:" in text, (name, flag)
    bench_help = option_help("bench")
    for flag, default in (("--shuffles", "10"), ("--chunks", "10"), ("--alpha", "2.0"), ("--beta", "2.0"), ("--seed", "0")):
        assert f"(default: {default})" in bench_help[flag]
    assert "(default: 1000)" in option_help("simulate")["-T"]
