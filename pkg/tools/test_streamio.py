"""
Tests for the stream text format.
"""

import os
import sys

import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream.core import StreamFormatError, StreamKind, Update
from dpstream.streamio import parse_stream, random_insertions, read_stream, write_stream


def test_parse_graph_stream():
    lines = ["# three steps", "T=3 h=4 kind=graph", "+ 0 1", "", "bot", "- 1 0"]
    stream = parse_stream(lines)
    assert stream.kind == StreamKind.GRAPH
    assert stream.updates == (
        Update.insert_edge(0, 1),
        Update.noop(),
        Update.delete_edge(0, 1),
    )


def test_parse_reports_line_number():
    with pytest.raises(StreamFormatError) as excinfo:
        parse_stream(["T=2 h=3 kind=elements", "+ 1", "* 2"])
    assert excinfo.value.line_number == 3


def test_parse_rejects_wrong_update_count():
    with pytest.raises(StreamFormatError):
        parse_stream(["T=3 h=3 kind=elements", "+ 1", "+ 2"])


def test_parse_rejects_out_of_range_id():
    with pytest.raises(StreamFormatError) as excinfo:
        parse_stream(["T=1 h=3 kind=elements", "+ 3"])
    assert excinfo.value.line_number == 2


def test_missing_file_names_path(tmp_path):
    path = str(tmp_path / "missing.txt")
    with pytest.raises(FileNotFoundError, match="missing.txt"):
        read_stream(path)


def test_write_then_read(tmp_path):
    stream = random_insertions(StreamKind.GRAPH, 6, 20, seed=3)
    path = write_stream(stream, str(tmp_path / "edges.txt"))
    assert read_stream(path) == stream


def test_random_insertions_are_seeded():
    a = random_insertions(StreamKind.ELEMENTS, 5, 30, seed=1)
    b = random_insertions(StreamKind.ELEMENTS, 5, 30, seed=1)
    assert a == b
    assert a.incremental
