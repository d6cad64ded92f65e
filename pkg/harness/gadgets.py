"""
Extendable bitwise-AND gadgets: incremental streams whose statistic, read before and after
each query block, reveals the inner products of a secret with public queries.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from dpstream.core import HarnessError, ParameterError, StreamKind, Update, UpdateStream
from dpstream.graphs import DynamicGraph, core_number, degree_histogram, max_matching_size
from dpstream.sne import topk_all
from harness.instances import InnerProductInstance

logger = logging.getLogger(__name__)


class GadgetProblem(str, Enum):
    MATCHING = "matching"
    KCORE = "kcore"
    DEGHIST = "deghist"
    TOPK = "topk"
    MSF = "msf"


class TimetableEntry(BaseModel):
    """A step after which the mechanism output is read."""

    step: int = Field(ge=1)
    query: int = Field(ge=1)
    query_kind: str
    decode_params: Dict[str, float] = Field(default_factory=dict)


def frequency_vector(frequencies: np.ndarray) -> np.ndarray:
    return np.array(frequencies, dtype=np.float64)


@dataclass
class GadgetInstance:
    """
    Generated stream plus everything needed to read and decode it.

    `statistic` is the exact evaluator an oracle applies to the current graph (or frequency
    vector); `truths` holds the values a perfect decoder recovers.
    """

    problem: GadgetProblem
    stream: UpdateStream
    timetable: List[TimetableEntry]
    truths: np.ndarray
    statistic: Callable
    vertex_budget: int
    step_budget: int
    weight: float = 1.0
    decode_offset: int = 0
    label: str = ""
    flagged: List[int] = field(default_factory=list)

    @property
    def queries(self) -> int:
        return len(self.truths)

    def decode(self, readings: Sequence, alpha: float = 0.0) -> np.ndarray:
        """
        Recover one value per query from the readings taken at the timetable steps.

        Args:
            readings (Sequence): Mechanism outputs, aligned with `timetable`
            alpha (float): Additive error allowance used by the TopK slope test

        Returns:
            np.ndarray: Decoded values, one per query
        """
        if len(readings) != len(self.timetable):
            raise ParameterError(
                f"{len(readings)} readings for {len(self.timetable)} timetable entries"
            )
        decoded = np.zeros(self.queries)
        pre: Dict[int, object] = {}
        self.flagged = []
        for entry, reading in zip(self.timetable, readings):
            j = entry.query
            if entry.query_kind == "pre":
                pre[j] = reading
            elif entry.query_kind == "post":
                decoded[j - 1] = self._decode_post(entry, reading, pre)
            elif entry.query_kind == "topk":
                decoded[j - 1] = self._decode_topk(entry, reading, alpha)
            elif entry.query_kind == "marginal":
                decoded[j - 1] = float(reading) / entry.decode_params["scale"]
        if self.flagged:
            logger.warning(f"TopK decode found no slope change for queries {self.flagged}")
        return decoded

    def _decode_post(self, entry: TimetableEntry, reading, pre: Dict[int, object]) -> float:
        if self.problem == GadgetProblem.MATCHING:
            return float(reading) - float(pre[entry.query])
        if self.problem == GadgetProblem.KCORE:
            return float(reading) - entry.decode_params["offset"]
        # degree histogram: projection onto the degree-(j+1) entry
        degree = int(entry.decode_params["degree"])
        histogram = np.asarray(reading, dtype=np.float64)
        return float(histogram[degree]) if degree < histogram.size else 0.0

    def _decode_topk(self, entry: TimetableEntry, reading, alpha: float) -> float:
        curve = topk_all(reading)
        slope = entry.decode_params["slope"]
        n = curve.size
        ks = np.arange(1, n + 1)
        below = np.flatnonzero(curve < slope * ks - alpha)
        if below.size:
            return float(below[0] + 1)
        self.flagged.append(entry.query)
        return float(n + 1)


class StreamBuilder:
    """Allocates vertex blocks and records updates and timetable marks in order."""

    def __init__(self):
        self.vertices = 0
        self.updates: List[Update] = []
        self.timetable: List[TimetableEntry] = []

    def block(self, size: int) -> List[int]:
        ids = list(range(self.vertices, self.vertices + size))
        self.vertices += size
        return ids

    def insert(self, u: int, v: int):
        self.updates.append(Update.insert_edge(u, v))

    def delete(self, u: int, v: int):
        self.updates.append(Update.delete_edge(u, v))

    def insert_item(self, item: int):
        self.updates.append(Update.insert(item))

    def bot(self):
        self.updates.append(Update.noop())

    def mark(self, query: int, query_kind: str, **decode_params):
        self.timetable.append(
            TimetableEntry(
                step=len(self.updates),
                query=query,
                query_kind=query_kind,
                decode_params=decode_params,
            )
        )

    def stream(self, kind: StreamKind, universe: Optional[int] = None) -> UpdateStream:
        return UpdateStream.padded(self.updates, universe or self.vertices, kind)


def matching_sizes(d: int, m: int) -> Tuple[int, int]:
    """(v(d), t(d)) of the matching gadget."""
    return d * (2 * (m + 1) + 1), 2 * d * (m + 1)


def kcore_sizes(d: int, m: int) -> Tuple[int, int]:
    clique = 2 * d * (m + 1)
    vertices = 1 + d + clique
    steps = math.comb(clique, 2) + 2 * d + d * d + d + m * (2 * d * d + 2 * d)
    return vertices, steps


def deghist_sizes(d: int, m: int) -> Tuple[int, int]:
    return 2 * m + d + 6, 2 * math.comb(m + 3, 2) + d + m * d


def _check_dimension(d: int, instance: InnerProductInstance):
    if d < 1:
        raise ParameterError(f"d must be at least 1, got {d}")
    if instance.d != d:
        raise ParameterError(f"instance has dimension {instance.d}, expected {d}")


def build_matching_gadget(d: int, instance: InnerProductInstance) -> GadgetInstance:
    """
    Matching gadget: layers U^0..U^(m+1) and V^0..V^m of d vertices each.

    Index i forms a path growing one layer per query; the dataset edge (u^0_i, v^0_i) and the
    query edge (u^j_i, v^j_i) together add one augmenting step exactly when x_i = q^j_i = 1,
    so the matching size reads j*d before query j and j*d + <x, q^j> after it.
    """
    _check_dimension(d, instance)
    m = instance.m
    builder = StreamBuilder()
    u_layers = [builder.block(d) for _ in range(m + 2)]
    v_layers = [builder.block(d) for _ in range(m + 1)]

    for i in range(d):
        builder.insert(v_layers[0][i], u_layers[1][i])
    for i in range(d):
        if instance.x[i]:
            builder.insert(u_layers[0][i], v_layers[0][i])
        else:
            builder.bot()

    for j in range(1, m + 1):
        query = instance.queries[j - 1]
        builder.mark(j, "pre")
        for i in range(d):
            if query[i]:
                builder.insert(u_layers[j][i], v_layers[j][i])
        builder.mark(j, "post")
        for i in range(d):
            builder.insert(v_layers[j][i], u_layers[j + 1][i])
        for i in range(d):
            if not query[i]:
                builder.insert(u_layers[j][i], v_layers[j][i])

    vertices, steps = matching_sizes(d, m)
    return GadgetInstance(
        problem=GadgetProblem.MATCHING,
        stream=builder.stream(StreamKind.GRAPH),
        timetable=builder.timetable,
        truths=instance.answers(),
        statistic=max_matching_size,
        vertex_budget=vertices,
        step_budget=steps,
        label=f"matching d={d} m={m}",
    )


def check_kcore_certificate(instance: GadgetInstance, secret: InnerProductInstance):
    """
    Replay a k-core gadget and check the hub's core number at every timetable step.

    Before query j the hub must sit in the 2jd-core exactly; after it, in the
    (2jd + <x, q^j>)-core. Raises HarnessError at the first step that disagrees.
    """
    if instance.problem != GadgetProblem.KCORE:
        raise ParameterError(f"expected a k-core gadget, got {instance.problem.value}")
    answers = secret.answers()
    marks: Dict[int, List[TimetableEntry]] = {}
    for entry in instance.timetable:
        marks.setdefault(entry.step, []).append(entry)
    graph = DynamicGraph(instance.stream.universe)
    for t, update in enumerate(instance.stream, start=1):
        graph.apply(update)
        if t not in marks:
            continue
        found = core_number(graph, 0)
        for entry in marks[t]:
            expected = int(entry.decode_params["offset"])
            if entry.query_kind == "post":
                expected += int(answers[entry.query - 1])
            if found != expected:
                raise HarnessError(
                    f"hub core number {found}, expected {expected} "
                    f"({entry.query_kind} query {entry.query})",
                    step=t,
                )


def build_kcore_gadget(d: int, instance: InnerProductInstance) -> GadgetInstance:
    """
    K-core gadget around a hub v (vertex 0).

    All V^j, W^j blocks form one clique; v gains V^j and W^j after query j. The core number
    of v is 2jd before query j and 2jd + <x, q^j> after it.
    """
    _check_dimension(d, instance)
    m = instance.m
    builder = StreamBuilder()
    (hub,) = builder.block(1)
    u_block = builder.block(d)
    v_blocks, w_blocks = [], []
    for _ in range(m + 1):
        v_blocks.append(builder.block(d))
        w_blocks.append(builder.block(d))

    clique = [vertex for j in range(m + 1) for vertex in v_blocks[j] + w_blocks[j]]
    for a in range(len(clique)):
        for b in range(a + 1, len(clique)):
            builder.insert(clique[a], clique[b])
    for vertex in v_blocks[0] + w_blocks[0]:
        builder.insert(hub, vertex)
    for u in u_block:
        for vertex in v_blocks[0]:
            builder.insert(u, vertex)

    for i in range(d):
        if instance.x[i]:
            builder.insert(hub, u_block[i])
        else:
            builder.bot()

    for j in range(1, m + 1):
        query = instance.queries[j - 1]
        targets = w_blocks[j - 1] + v_blocks[j]
        builder.mark(j, "pre", offset=2 * j * d)
        for i in range(d):
            if query[i]:
                for vertex in targets:
                    builder.insert(u_block[i], vertex)
        builder.mark(j, "post", offset=2 * j * d)
        for i in range(d):
            if not query[i]:
                for vertex in targets:
                    builder.insert(u_block[i], vertex)
        for vertex in v_blocks[j] + w_blocks[j]:
            builder.insert(hub, vertex)

    vertices, steps = kcore_sizes(d, m)
    return GadgetInstance(
        problem=GadgetProblem.KCORE,
        stream=builder.stream(StreamKind.GRAPH),
        timetable=builder.timetable,
        truths=instance.answers(),
        statistic=partial(core_number, v=hub),
        vertex_budget=vertices,
        step_budget=steps,
        label=f"kcore d={d} m={m}",
    )


def build_deghist_gadget(d: int, instance: InnerProductInstance) -> GadgetInstance:
    """
    Degree-histogram gadget: w_i reaches degree j+1 right after query j exactly when
    x_i = q^j_i = 1, while every other vertex sits at degree m+2 or more.
    """
    _check_dimension(d, instance)
    m = instance.m
    if m < d - 3:
        raise ParameterError(f"degree-histogram gadget needs m >= d - 3, got m={m}, d={d}")
    builder = StreamBuilder()
    u_block = builder.block(m - d + 3)
    v_block = builder.block(d)
    w_block = builder.block(d)
    x_block = builder.block(m)
    y_block = builder.block(3)

    for group in (u_block + v_block, x_block + y_block):
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                builder.insert(group[a], group[b])

    for i in range(d):
        if instance.x[i]:
            builder.insert(v_block[i], w_block[i])
        else:
            builder.bot()

    for j in range(1, m + 1):
        query = instance.queries[j - 1]
        hub = x_block[j - 1]
        builder.mark(j, "pre", degree=j + 1)
        for i in range(d):
            if query[i]:
                builder.insert(w_block[i], hub)
        builder.mark(j, "post", degree=j + 1)
        for i in range(d):
            if not query[i]:
                builder.insert(w_block[i], hub)

    vertices, steps = deghist_sizes(d, m)
    return GadgetInstance(
        problem=GadgetProblem.DEGHIST,
        stream=builder.stream(StreamKind.GRAPH),
        timetable=builder.timetable,
        truths=instance.answers(),
        statistic=degree_histogram,
        vertex_budget=vertices,
        step_budget=steps,
        label=f"deghist d={d} m={m}",
    )


def build_topk_reduction(d: int, instance: InnerProductInstance) -> GadgetInstance:
    """
    TopK reduction over n = d elements and T = d + 2md insertions.

    After the first half of query j element i has count (j-1) + x_i + q^j_i, so the Top-k
    curve rises with slope j+1 exactly up to k* = <x, q^j>.
    """
    _check_dimension(d, instance)
    m = instance.m
    builder = StreamBuilder()
    for i in range(d):
        if instance.x[i]:
            builder.insert_item(i)
        else:
            builder.bot()
    for j in range(1, m + 1):
        query = instance.queries[j - 1]
        for i in range(d):
            if query[i]:
                builder.insert_item(i)
            else:
                builder.bot()
        builder.mark(j, "topk", slope=j + 1)
        for i in range(d):
            if not query[i]:
                builder.insert_item(i)
            else:
                builder.bot()

    return GadgetInstance(
        problem=GadgetProblem.TOPK,
        stream=builder.stream(StreamKind.ELEMENTS, universe=d),
        timetable=builder.timetable,
        truths=instance.answers(),
        statistic=frequency_vector,
        vertex_budget=d,
        step_budget=d + 2 * m * d,
        decode_offset=1,
        label=f"topk d={d} m={m}",
    )


GADGET_BUILDERS = {
    GadgetProblem.MATCHING: build_matching_gadget,
    GadgetProblem.KCORE: build_kcore_gadget,
    GadgetProblem.DEGHIST: build_deghist_gadget,
    GadgetProblem.TOPK: build_topk_reduction,
}
