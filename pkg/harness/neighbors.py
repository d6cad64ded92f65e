"""
Neighboring-stream diff checks: regenerate a stream from a secret that differs in one bit (or
one row) and measure where the streams, and the counter inputs mechanisms derive from them,
diverge.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from dpstream.core import RandomSource, UpdateStream
from dpstream.graph_mechanisms import degree_counter_inputs
from dpstream.sne import level_count, level_update_stream
from harness.gadgets import GadgetInstance
from harness.instances import InnerProductInstance, MarginalsInstance

logger = logging.getLogger(__name__)

Routed = List[Tuple[int, int]]
Secret = Union[InnerProductInstance, MarginalsInstance]


@dataclass
class NeighborReport:
    """Stream positions (1-based) that differ, what they touch, and per-transform column diffs."""

    flipped: int
    positions: List[int]
    touched: Set[object]
    columns: Dict[str, Dict[int, Tuple[int, float]]] = field(default_factory=dict)

    def max_column_entries(self, transform: str) -> int:
        return max((entries for entries, _ in self.columns[transform].values()), default=0)

    def max_column_l1(self, transform: str) -> float:
        return max((l1 for _, l1 in self.columns[transform].values()), default=0.0)


def stream_differences(a: UpdateStream, b: UpdateStream) -> List[int]:
    return [t for t, (x, y) in enumerate(zip(a, b), start=1) if x != y]


def routed_differences(routed_a: Sequence[Tuple[int, int]], routed_b: Sequence[Tuple[int, int]]):
    """Per column: (number of differing entries, l1 norm of the difference)."""
    differences: Dict[int, List[float]] = {}
    for (col_a, val_a), (col_b, val_b) in zip(routed_a, routed_b):
        if (col_a, val_a) == (col_b, val_b):
            continue
        delta = {}
        if val_a:
            delta[col_a] = delta.get(col_a, 0) + val_a
        if val_b:
            delta[col_b] = delta.get(col_b, 0) - val_b
        for column, value in delta.items():
            if value:
                entry = differences.setdefault(column, [0, 0.0])
                entry[0] += 1
                entry[1] += abs(value)
    return {column: (int(entries), float(l1)) for column, (entries, l1) in differences.items()}


def degree_counter_transform(stream: UpdateStream) -> Routed:
    return degree_counter_inputs(stream.updates, stream.universe)


def level_transform(tau_f: float, zeta: float) -> Callable[[UpdateStream], Routed]:
    def transform(stream: UpdateStream) -> Routed:
        items = [None if update.is_noop else update.item for update in stream]
        return level_update_stream(items, stream.universe, tau_f, zeta)

    return transform


def _neighbor(secret: Secret, generator: np.random.Generator) -> Tuple[int, Secret]:
    if isinstance(secret, InnerProductInstance):
        index = int(generator.integers(secret.d))
        return index, secret.with_flipped(index)
    index = int(generator.integers(secret.n))
    return index, secret.with_row(index, 1 - secret.matrix[index])


def _touched(stream: UpdateStream, positions: Sequence[int]) -> Set[object]:
    touched = set()
    for t in positions:
        update = stream[t - 1]
        if not update.is_noop:
            touched.add(update.edge if update.is_edge else update.item)
    return touched


def neighbor_diff_check(
    builder: Callable[[Secret], GadgetInstance],
    secret: Secret,
    seed: int,
    transforms: Optional[Dict[str, Callable[[UpdateStream], Routed]]] = None,
) -> NeighborReport:
    """
    Compare the stream of `secret` with the stream of a random neighbor.

    Inner-product secrets flip one bit of x; marginals secrets complement one row.

    Args:
        builder (Callable): Maps a secret to its gadget instance
        secret: InnerProductInstance or MarginalsInstance
        seed (int): Picks the flipped bit or row
        transforms (Dict[str, Callable]): Named stream-to-counter-input maps to compare as well

    Returns:
        NeighborReport: Differing positions, touched edges or elements, per-column diffs
    """
    generator = RandomSource(seed).generator
    index, neighbor = _neighbor(secret, generator)
    stream_a = builder(secret).stream
    stream_b = builder(neighbor).stream
    positions = stream_differences(stream_a, stream_b)
    report = NeighborReport(
        flipped=index,
        positions=positions,
        touched=_touched(stream_a, positions) | _touched(stream_b, positions),
    )
    for name, transform in (transforms or {}).items():
        report.columns[name] = routed_differences(transform(stream_a), transform(stream_b))
    logger.debug(
        f"Neighbor of index {index}: {len(positions)} differing positions, touching {report.touched}"
    )
    return report


def sne_level_diff_survey(
    n: int,
    horizon: int,
    zeta: float,
    tau_f: float,
    pairs: int = 1000,
    seed: int = 0,
) -> Dict[str, object]:
    """
    Level-stream differences over random event-level neighbor pairs of insertion streams.

    Each pair replaces one position of a uniform random stream by a no-op or another element.
    """
    generator = RandomSource(seed).generator
    levels = level_count(tau_f, zeta)
    worst = 0
    for _ in range(pairs):
        items: List[Optional[int]] = [int(i) for i in generator.integers(0, n, size=horizon)]
        neighbor = list(items)
        position = int(generator.integers(horizon))
        replacement = int(generator.integers(-1, n))
        neighbor[position] = None if replacement < 0 or replacement == items[position] else replacement
        routed_a = level_update_stream(items, n, tau_f, zeta)
        routed_b = level_update_stream(neighbor, n, tau_f, zeta)
        differing = sum(1 for a, b in zip(routed_a, routed_b) if a != b)
        worst = max(worst, differing)

    report = {
        "pairs": pairs,
        "levels": levels,
        "max_differing_entries": worst,
        "bound": 4 * levels,
        "within_bound": worst <= 4 * levels,
    }
    logger.info(f"Level-stream survey: {report}")
    return report
