"""
Text format for update streams.

    T=<int> h=<int> kind=<elements|graph>
    + <i>          insert element i
    - <i>          delete element i
    + <u> <v>      insert edge {u, v}
    - <u> <v>      delete edge {u, v}
    bot            no-op

Blank lines and lines starting with '#' are skipped. Exactly T update lines must follow the header.
"""

import logging
import os
import re
from typing import Iterable, List

from dpstream.core import (
    ParameterError,
    RandomSource,
    StreamFormatError,
    StreamKind,
    Update,
    UpdateKind,
    UpdateStream,
)

logger = logging.getLogger(__name__)

HEADER_PATTERN = re.compile(r"^T=(\d+)\s+h=(\d+)\s+kind=(elements|graph)$")


def _parse_update(line: str, kind: StreamKind, line_number: int) -> Update:
    if line == "bot":
        return Update.noop()
    tokens = line.split()
    if tokens[0] not in ("+", "-"):
        raise StreamFormatError(f"unknown update {line!r}", line_number)
    try:
        ids = [int(token) for token in tokens[1:]]
    except ValueError:
        raise StreamFormatError(f"non-integer id in {line!r}", line_number)
    expected = 2 if kind == StreamKind.GRAPH else 1
    if len(ids) != expected:
        raise StreamFormatError(
            f"{kind.value} updates take {expected} id(s), got {line!r}", line_number
        )
    insert = tokens[0] == "+"
    try:
        if kind == StreamKind.GRAPH:
            edge_kind = UpdateKind.INSERT_EDGE if insert else UpdateKind.DELETE_EDGE
            return Update(edge_kind, ids[0], ids[1])
        element_kind = UpdateKind.INSERT_ELEMENT if insert else UpdateKind.DELETE_ELEMENT
        return Update(element_kind, ids[0])
    except ParameterError as e:
        raise StreamFormatError(str(e), line_number)


def parse_stream(lines: Iterable[str]) -> UpdateStream:
    """Parse the text format into an UpdateStream."""
    header = None
    updates: List[Update] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            match = HEADER_PATTERN.match(line)
            if not match:
                raise StreamFormatError(f"bad header {line!r}", line_number)
            header = (int(match.group(1)), int(match.group(2)), StreamKind(match.group(3)))
            continue
        update = _parse_update(line, header[2], line_number)
        if not update.is_noop:
            largest = update.v if update.is_edge else update.u
            if largest >= header[1]:
                raise StreamFormatError(
                    f"id {largest} outside universe h={header[1]}", line_number
                )
        updates.append(update)
        if len(updates) > header[0]:
            raise StreamFormatError(f"more than T={header[0]} updates", line_number)

    if header is None:
        raise StreamFormatError("missing header")
    if len(updates) != header[0]:
        raise StreamFormatError(f"expected {header[0]} updates, found {len(updates)}")
    try:
        return UpdateStream(header[0], header[1], header[2], tuple(updates))
    except ParameterError as e:
        raise StreamFormatError(str(e))


def read_stream(path: str) -> UpdateStream:
    """
    Read a stream file.

    Args:
        path (str): Path to the stream file

    Returns:
        UpdateStream: The parsed stream
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"stream file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        stream = parse_stream(f)
    logger.info(
        f"Read {stream.kind.value} stream from {path} (T={stream.horizon}, h={stream.universe})"
    )
    return stream


def format_update(update: Update) -> str:
    if update.is_noop:
        return "bot"
    sign = "-" if update.is_delete else "+"
    if update.is_edge:
        return f"{sign} {update.u} {update.v}"
    return f"{sign} {update.u}"


def write_stream(stream: UpdateStream, path: str) -> str:
    """Write a stream in the text format and return the path."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"T={stream.horizon} h={stream.universe} kind={stream.kind.value}\n")
        for update in stream.updates:
            f.write(format_update(update) + "\n")
    logger.info(f"Wrote stream with {stream.horizon} updates to {path}")
    return path


def random_insertions(kind: StreamKind, universe: int, horizon: int, seed: int) -> UpdateStream:
    """Uniform insertions-only stream: random elements, or random vertex pairs for graphs."""
    generator = RandomSource(seed).generator
    if kind == StreamKind.GRAPH:
        if universe < 2:
            raise ParameterError(f"graph stream needs at least 2 vertices, got {universe}")
        updates = []
        for _ in range(horizon):
            u, v = generator.choice(universe, size=2, replace=False)
            updates.append(Update.insert_edge(int(u), int(v)))
    else:
        items = generator.integers(0, universe, size=horizon)
        updates = [Update.insert(int(item)) for item in items]
    return UpdateStream(horizon, universe, StreamKind(kind), tuple(updates))
