"""
Dynamic simple graphs and the exact evaluators of the statistics the mechanisms release.

An edge is present while its signed frequency is positive. Evaluators read a frozen
networkx snapshot and never mutate it.
"""

import itertools
import logging
from collections import Counter
from typing import Iterable, Optional, Tuple

import networkx as nx
import numpy as np

from dpstream.core import InputError, ParameterError, Update, UpdateStream, StreamKind

logger = logging.getLogger(__name__)

# Vertex budget of the exhaustive cross-check oracles
EXHAUSTIVE_LIMIT = 12


class DynamicGraph:
    """Simple undirected graph on vertices 0..n-1 built from edge updates.

    Vertices 0 and 1 double as s and t for s-t cut queries.
    """

    def __init__(self, n: int, edges: Optional[Iterable[Tuple[int, int]]] = None):
        if n < 1:
            raise ParameterError(f"graph needs at least one vertex, got {n}")
        self.n = n
        self._frequency: Counter = Counter()
        self._graph = nx.Graph()
        self._graph.add_nodes_from(range(n))
        for u, v in edges or ():
            self.apply(Update.insert_edge(u, v))

    @classmethod
    def from_stream(cls, stream: UpdateStream, t: Optional[int] = None) -> "DynamicGraph":
        """Graph G^t of a graph stream (whole stream by default)."""
        if stream.kind != StreamKind.GRAPH:
            raise ParameterError("graph needs a graph stream")
        graph = cls(stream.universe)
        for update in stream.updates[: stream.horizon if t is None else t]:
            graph.apply(update)
        return graph

    def apply(self, update: Update):
        if update.is_noop:
            return
        if not update.is_edge:
            raise InputError(f"graph cannot apply {update.kind.value}")
        u, v = update.edge
        if v >= self.n:
            raise InputError(f"edge ({u}, {v}) outside vertex range {self.n}")
        self._frequency[(u, v)] += update.sign
        if self._frequency[(u, v)] > 0:
            self._graph.add_edge(u, v)
        elif self._graph.has_edge(u, v):
            self._graph.remove_edge(u, v)

    def has_edge(self, u: int, v: int) -> bool:
        return self._graph.has_edge(u, v)

    def degree(self, v: int) -> int:
        return self._graph.degree(v)

    @property
    def graph(self) -> nx.Graph:
        return self._graph

    def snapshot(self) -> nx.Graph:
        return nx.freeze(self._graph.copy())


def _as_nx(g) -> nx.Graph:
    return g.graph if isinstance(g, DynamicGraph) else g


def max_matching_size(g) -> int:
    """Maximum matching size of a general graph (blossom)."""
    return len(nx.max_weight_matching(_as_nx(g), maxcardinality=True))


def core_number(g, v: int) -> int:
    graph = _as_nx(g)
    if v not in graph:
        raise ParameterError(f"vertex {v} not in graph")
    return nx.core_number(graph)[v]


def degree_histogram(g) -> np.ndarray:
    """Counts of vertices per degree; position d holds degree d, position 0 is always 0."""
    graph = _as_nx(g)
    histogram = np.zeros(max(graph.number_of_nodes(), 1), dtype=np.int64)
    for _, degree in graph.degree():
        if degree > 0:
            histogram[degree] += 1
    return histogram


def st_mincut(g, s: int = 0, t: int = 1) -> int:
    graph = _as_nx(g)
    if s == t:
        raise ParameterError("s-t cut needs s != t")
    if s not in graph or t not in graph:
        raise ParameterError(f"designated vertices {s}, {t} missing")
    return nx.algorithms.connectivity.local_edge_connectivity(graph, s, t)


def mincut(g) -> int:
    """Global minimum edge cut; 0 for disconnected graphs and single vertices."""
    graph = _as_nx(g)
    if graph.number_of_nodes() < 2 or not nx.is_connected(graph):
        return 0
    cut_value, _ = nx.stoer_wagner(graph)
    return int(cut_value)


def count_degree_at_least(g, tau: int) -> int:
    return sum(1 for _, degree in _as_nx(g).degree() if degree >= tau)


def edge_count(g) -> int:
    return _as_nx(g).number_of_edges()


def connected_components(g) -> int:
    return nx.number_connected_components(_as_nx(g))


def triangle_count(g) -> int:
    return sum(nx.triangles(_as_nx(g)).values()) // 3


def _check_small(graph: nx.Graph):
    if graph.number_of_nodes() > EXHAUSTIVE_LIMIT:
        raise ParameterError(
            f"exhaustive oracle limited to {EXHAUSTIVE_LIMIT} vertices, got {graph.number_of_nodes()}"
        )


def exhaustive_matching_size(g) -> int:
    graph = _as_nx(g)
    _check_small(graph)
    edges = sorted(graph.edges())

    def best(index: int, used: frozenset) -> int:
        if index == len(edges):
            return 0
        u, v = edges[index]
        skip = best(index + 1, used)
        if u in used or v in used:
            return skip
        return max(skip, 1 + best(index + 1, used | {u, v}))

    return best(0, frozenset())


def _cut_size(graph: nx.Graph, side: set) -> int:
    return sum(1 for u, v in graph.edges() if (u in side) != (v in side))


def exhaustive_st_mincut(g, s: int = 0, t: int = 1) -> int:
    graph = _as_nx(g)
    _check_small(graph)
    others = [v for v in graph.nodes() if v not in (s, t)]
    best = None
    for r in range(len(others) + 1):
        for chosen in itertools.combinations(others, r):
            size = _cut_size(graph, {s, *chosen})
            best = size if best is None else min(best, size)
    return best


def exhaustive_mincut(g) -> int:
    graph = _as_nx(g)
    _check_small(graph)
    nodes = sorted(graph.nodes())
    if len(nodes) < 2:
        return 0
    first, rest = nodes[0], nodes[1:]
    best = None
    for r in range(len(rest)):
        for chosen in itertools.combinations(rest, r):
            size = _cut_size(graph, {first, *chosen})
            best = size if best is None else min(best, size)
    return best


def exhaustive_core_number(g, v: int) -> int:
    """Max over vertex sets containing v of the minimum induced degree."""
    graph = _as_nx(g)
    _check_small(graph)
    others = [w for w in graph.nodes() if w != v]
    best = 0
    for r in range(len(others) + 1):
        for chosen in itertools.combinations(others, r):
            sub = graph.subgraph((v, *chosen))
            best = max(best, min(degree for _, degree in sub.degree()))
    return best
