"""
End-to-end tests of the command-line runner.
"""

import os
import sys

import pandas as pd
import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream import config
from dpstream.main import main
from dpstream.streamio import read_stream
from dpstream.tables import read_csv
from harness.dump import read_timetable

EDGE_STREAM = """T=5 h=10 kind=graph
+ 0 1
+ 2 3
+ 4 5
+ 6 7
+ 8 9
"""


@pytest.fixture(autouse=True)
def fast_calibration(monkeypatch):
    monkeypatch.setattr(config, "CALIBRATION_PATHS", 500)


@pytest.fixture
def edge_stream(tmp_path):
    path = tmp_path / "edges.txt"
    path.write_text(EDGE_STREAM)
    return str(path)


def test_noise_off_matching_trace(tmp_path, edge_stream):
    output = str(tmp_path / "trace.csv")
    code = main(
        [
            "run-mechanism",
            "--mechanism", "matching",
            "--stream", edge_stream,
            "--noise", "off",
            "--k", "2",
            "--output", output,
        ]
    )
    assert code == 0
    with open(output, encoding="utf-8") as f:
        assert f.readline().startswith("# dpstream trace v")
    trace = read_csv(output)
    assert trace["true"].tolist() == [1, 2, 3, 4, 5]
    assert trace["released"].tolist() == [0.0, 2.0, 2.0, 4.0, 4.0]
    assert (trace["abs_error"] < 2).all()


def test_reruns_are_byte_identical(tmp_path):
    outputs = [str(tmp_path / f"counter_{i}.csv") for i in range(2)]
    for output in outputs:
        args = ["run-mechanism", "--mechanism", "counter", "--n", "4", "--T", "50"]
        assert main(args + ["--seed", "3", "--trials", "2", "--output", output]) == 0
    with open(outputs[0], "rb") as a, open(outputs[1], "rb") as b:
        assert a.read() == b.read()


def test_missing_stream_file(tmp_path):
    missing = str(tmp_path / "absent.txt")
    assert main(["run-mechanism", "--mechanism", "counter", "--stream", missing]) == 2


def test_invalid_configuration():
    assert main(["run-mechanism", "--mechanism", "median", "--n", "3", "--T", "3"]) == 2
    assert main(["run-mechanism", "--mechanism", "counter", "--n", "3"]) == 2
    assert main(["run-reduction", "--gadget", "matching"]) == 2
    assert main(["calibrate", "--n", "2", "--T", "8", "--eps", "-1"]) == 2


def test_degree_histogram_needs_delta(tmp_path, edge_stream):
    output = str(tmp_path / "deghist.csv")
    args = ["run-mechanism", "--mechanism", "deghist", "--stream", edge_stream, "--output", output]
    assert main(args) == 2
    assert main(args + ["--delta", "1e-6"]) == 0
    assert set(read_csv(output).columns) >= {"t", "index", "true", "released", "abs_error"}


def test_element_mechanism_rejects_graph_stream(edge_stream):
    assert main(["run-mechanism", "--mechanism", "counter", "--stream", edge_stream]) == 2


@pytest.mark.parametrize("gadget", ["matching", "kcore", "deghist", "topk"])
def test_exact_reduction_round_trip(tmp_path, gadget):
    output = str(tmp_path / "reduction.csv")
    summary = str(tmp_path / "summary.csv")
    args = ["run-reduction", "--gadget", gadget, "--oracle", "exact", "--d", "5"]
    assert main(args + ["--output", output, "--summary", summary]) == 0
    frame = read_csv(output)
    assert list(frame.columns) == ["trial", "j", "true_inprod", "decoded", "error"]
    offset = 1 if gadget == "topk" else 0
    assert (frame["error"] == offset).all()
    assert read_csv(summary)["max_error"].tolist() == [0.0]


def test_summary_file_accumulates(tmp_path):
    summary = str(tmp_path / "summary.csv")
    args = ["run-reduction", "--gadget", "matching", "--oracle", "biased", "--d", "3"]
    for seed in ("1", "2"):
        assert main(args + ["--seed", seed, "--summary", summary]) == 0
    assert read_csv(summary)["seed"].tolist() == [1, 2]


def test_private_reduction_runs(tmp_path):
    summary = str(tmp_path / "summary.csv")
    args = ["run-reduction", "--gadget", "matching", "--d", "4", "--trials", "2"]
    assert main(args + ["--summary", summary]) == 0
    rows = read_csv(summary)
    assert rows["mechanism"].tolist() == ["private", "private"]
    assert (rows["alpha"] > 0).all()


def test_marginals_reduction(tmp_path):
    summary = str(tmp_path / "summary.csv")
    args = ["run-reduction", "--gadget", "msf", "--family", "st_mincut", "--n", "4", "--d", "3"]
    assert main(args + ["--oracle", "exact", "--summary", summary]) == 0
    # no private mechanism accepts the deletions of a marginals stream
    assert main(args + ["--summary", summary]) == 2


def test_gen_gadget(tmp_path):
    output = str(tmp_path / "matching.txt")
    assert main(["gen-gadget", "--gadget", "matching", "--d", "3", "--output", output]) == 0
    stream = read_stream(output)
    assert stream.horizon == 2 * 3 * 4
    timetable = read_timetable(output + ".timetable.jsonl")
    assert [entry.query_kind for entry in timetable[:2]] == ["pre", "post"]
    assert len(timetable) == 6


def test_calibrate_appends_rows(tmp_path):
    output = str(tmp_path / "bounds.csv")
    for seed in ("1", "2"):
        args = ["calibrate", "--n", "2", "--T", "16", "--paths", "200", "--seed", seed]
        assert main(args + ["--output", output]) == 0
    rows = read_csv(output)
    assert len(rows) == 2
    assert (rows["E"] > 0).all()


def test_sne_query(tmp_path):
    output = str(tmp_path / "sne.csv")
    args = ["sne-query", "--n", "8", "--T", "40", "--norm", "l2", "--output", output]
    assert main(args) == 0
    frame = read_csv(output)
    assert list(frame.columns) == ["trial", "t", "norm", "estimate", "true"]
    assert len(frame) == 40


def test_sne_batch_query(tmp_path):
    output = str(tmp_path / "sne_batch.csv")
    args = ["sne-query", "--n", "4", "--T", "10", "--batch", "--boosted", "--output", output]
    assert main(args) == 0
    frame = read_csv(output)
    assert len(frame) == 40
    assert frame["k"].max() == 4


def test_metrics_out(tmp_path):
    metrics = str(tmp_path / "metrics.prom")
    output = str(tmp_path / "trace.csv")
    args = ["run-mechanism", "--mechanism", "histogram", "--n", "3", "--T", "10"]
    assert main(args + ["--output", output, "--metrics-out", metrics]) == 0
    assert os.path.exists(metrics)
    assert len(pd.read_csv(output, comment="#")) == 30


def test_kind_must_match_mechanism(tmp_path):
    output = str(tmp_path / "counter.csv")
    args = ["run-mechanism", "--mechanism", "counter", "--n", "3", "--T", "5", "--output", output]
    assert main(args + ["--kind", "graph"]) == 2
    assert main(args + ["--kind", "elements"]) == 0
    graph_args = ["run-mechanism", "--mechanism", "matching", "--n", "4", "--T", "5"]
    assert main(graph_args + ["--kind", "elements"]) == 2
    assert main(["sne-query", "--n", "4", "--T", "5", "--kind", "graph"]) == 2
