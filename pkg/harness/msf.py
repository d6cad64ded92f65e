"""
Marginals-solving families: item-level reductions from one-way marginals to graph statistics
on fully dynamic edge streams.

Each family fixes a base graph H_n plus n special edges e_1..e_n such that adding any subset S
of them lifts the statistic to w * |S|. Column j of the private matrix inserts the edges of its
ones, is read, then removed again.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Callable, List, Optional, Tuple

from dpstream.core import ParameterError, StreamKind
from dpstream.graphs import (
    core_number,
    count_degree_at_least,
    edge_count,
    max_matching_size,
    mincut,
    st_mincut,
    triangle_count,
)
from harness.gadgets import GadgetInstance, GadgetProblem, StreamBuilder
from harness.instances import MarginalsInstance

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]


class MsfKind(str, Enum):
    ST_MINCUT = "st_mincut"
    MINCUT = "mincut"
    DEG_AT_LEAST = "deg_at_least"
    KCORE = "kcore"
    EDGE_COUNT = "edge_count"
    ZERO_BASED = "zero_based"


ZERO_BASED_GADGETS = ("matching", "triangle")


@dataclass(frozen=True)
class MsfProblem:
    """A family tag plus its parameter: tau for DEG_AT_LEAST, the 1-edge gadget for ZERO_BASED."""

    kind: MsfKind
    tau: int = 1
    gadget: str = "matching"

    def __post_init__(self):
        object.__setattr__(self, "kind", MsfKind(self.kind))
        if self.kind == MsfKind.DEG_AT_LEAST and self.tau < 1:
            raise ParameterError(f"tau must be at least 1, got {self.tau}")
        if self.kind == MsfKind.ZERO_BASED and self.gadget not in ZERO_BASED_GADGETS:
            raise ParameterError(
                f"unknown 0-based gadget {self.gadget!r}, expected one of {ZERO_BASED_GADGETS}"
            )

    @classmethod
    def parse(cls, text: str) -> "MsfProblem":
        """Parse `kind` or `kind:param`, e.g. `deg_at_least:3` or `zero_based:triangle`."""
        name, _, param = text.strip().lower().partition(":")
        try:
            kind = MsfKind(name)
        except ValueError:
            raise ParameterError(f"unsupported marginals family {text!r}")
        if kind == MsfKind.DEG_AT_LEAST:
            return cls(kind, tau=int(param) if param else 1)
        if kind == MsfKind.ZERO_BASED:
            return cls(kind, gadget=param or "matching")
        if param:
            raise ParameterError(f"family {kind.value} takes no parameter")
        return cls(kind)

    @property
    def name(self) -> str:
        if self.kind == MsfKind.DEG_AT_LEAST:
            return f"{self.kind.value}:{self.tau}"
        if self.kind == MsfKind.ZERO_BASED:
            return f"{self.kind.value}:{self.gadget}"
        return self.kind.value


@dataclass
class MsfFamily:
    """Base graph H_n, special edges E_n, weight w and the exact evaluator of g."""

    vertices: int
    base_edges: List[Edge]
    special_edges: List[Edge]
    weight: int
    statistic: Callable


def _edge_count_vertices(n: int) -> int:
    # ceil(2 * sqrt(n)) without floating point
    return math.isqrt(4 * n - 1) + 1


def _cyclic_radius(tau: int) -> int:
    return (tau - 1) // 2


def vertex_count(problem: MsfProblem, n: int) -> int:
    """nu(n): vertices of the family's graphs."""
    if problem.kind == MsfKind.ST_MINCUT:
        return n + 2
    if problem.kind in (MsfKind.MINCUT, MsfKind.KCORE):
        return n + 1
    if problem.kind == MsfKind.DEG_AT_LEAST:
        return 3 * n
    if problem.kind == MsfKind.EDGE_COUNT:
        return _edge_count_vertices(n)
    return 2 * n if problem.gadget == "matching" else 3 * n


def base_edge_count(problem: MsfProblem, n: int) -> int:
    """xi(n): edges of H_n."""
    if problem.kind == MsfKind.ST_MINCUT:
        return n
    if problem.kind in (MsfKind.MINCUT, MsfKind.KCORE):
        return math.comb(n, 2)
    if problem.kind == MsfKind.DEG_AT_LEAST:
        return n * _cyclic_radius(problem.tau) + (n if problem.tau % 2 == 0 else 0)
    if problem.kind == MsfKind.EDGE_COUNT:
        return 0
    return 0 if problem.gadget == "matching" else 2 * n


def build_family(problem: MsfProblem, n: int) -> MsfFamily:
    if n < 1:
        raise ParameterError(f"family needs n >= 1, got {n}")
    kind = problem.kind

    if kind == MsfKind.ST_MINCUT:
        # s = 0, t = 1, v_i = i + 2
        spokes = [i + 2 for i in range(n)]
        return MsfFamily(
            vertices=n + 2,
            base_edges=[(1, v) for v in spokes],
            special_edges=[(0, v) for v in spokes],
            weight=1,
            statistic=partial(st_mincut, s=0, t=1),
        )

    if kind in (MsfKind.MINCUT, MsfKind.KCORE):
        # vertex 0 against a K_n on 1..n
        clique = list(range(1, n + 1))
        statistic = mincut if kind == MsfKind.MINCUT else partial(core_number, v=0)
        return MsfFamily(
            vertices=n + 1,
            base_edges=[(a, b) for a in clique for b in clique if a < b],
            special_edges=[(0, v) for v in clique],
            weight=1,
            statistic=statistic,
        )

    if kind == MsfKind.DEG_AT_LEAST:
        tau = problem.tau
        radius = _cyclic_radius(tau)
        if 2 * radius > n - 1:
            raise ParameterError(f"deg_at_least:{tau} needs n >= {2 * radius + 1}, got {n}")
        v_block = list(range(n))
        u_block = list(range(n, 2 * n))
        z_block = list(range(2 * n, 3 * n))
        base = [
            (v_block[i], v_block[(i + offset) % n])
            for i in range(n)
            for offset in range(1, radius + 1)
        ]
        if tau % 2 == 0:
            base.extend(zip(v_block, u_block))
        return MsfFamily(
            vertices=3 * n,
            base_edges=base,
            special_edges=list(zip(v_block, z_block)),
            weight=2 if tau == 1 else 1,
            statistic=partial(count_degree_at_least, tau=tau),
        )

    if kind == MsfKind.EDGE_COUNT:
        k = _edge_count_vertices(n)
        pairs = [(a, b) for a in range(k) for b in range(a + 1, k)][:n]
        return MsfFamily(
            vertices=k, base_edges=[], special_edges=pairs, weight=1, statistic=edge_count
        )

    if problem.gadget == "matching":
        return MsfFamily(
            vertices=2 * n,
            base_edges=[],
            special_edges=[(2 * i, 2 * i + 1) for i in range(n)],
            weight=1,
            statistic=max_matching_size,
        )
    # triangle minus one edge per copy
    base, special = [], []
    for i in range(n):
        a, b, c = 3 * i, 3 * i + 1, 3 * i + 2
        base.extend([(a, b), (b, c)])
        special.append((a, c))
    return MsfFamily(
        vertices=3 * n, base_edges=base, special_edges=special, weight=1, statistic=triangle_count
    )


def msf_horizon(problem: MsfProblem, n: int, d: int) -> int:
    return base_edge_count(problem, n) + 2 * n * d


def build_msf_stream(problem: MsfProblem, marginals: MarginalsInstance) -> GadgetInstance:
    """
    Item-level stream for the private matrix: H_n first, then per column j the special edges of
    its ones (no-ops elsewhere), a read, and their deletions.
    """
    n, d = marginals.n, marginals.d
    family = build_family(problem, n)
    builder = StreamBuilder()
    builder.block(family.vertices)
    for u, v in family.base_edges:
        builder.insert(u, v)
    for j in range(1, d + 1):
        column = marginals.matrix[:, j - 1]
        for i in range(n):
            if column[i]:
                builder.insert(*family.special_edges[i])
            else:
                builder.bot()
        builder.mark(j, "marginal", scale=float(family.weight * n))
        for i in range(n):
            if column[i]:
                builder.delete(*family.special_edges[i])
            else:
                builder.bot()

    logger.debug(f"Built {problem.name} stream: n={n}, d={d}, {len(builder.updates)} steps")
    return GadgetInstance(
        problem=GadgetProblem.MSF,
        stream=builder.stream(StreamKind.GRAPH),
        timetable=builder.timetable,
        truths=marginals.normalized_column_sums(),
        statistic=family.statistic,
        vertex_budget=family.vertices,
        step_budget=msf_horizon(problem, n, d),
        weight=float(family.weight),
        label=f"msf {problem.name} n={n} d={d}",
    )


def _largest_fitting_n(problem: MsfProblem, horizon: int, d: int, limit: int) -> int:
    n = 0
    while n < limit and msf_horizon(problem, n + 1, d) <= horizon:
        n += 1
    return n


def _largest_n_for_vertices(problem: MsfProblem, max_vertices: int, limit: int) -> int:
    n = 0
    while n < limit and vertex_count(problem, n + 1) <= max_vertices:
        n += 1
    return n


def plan_item_level(
    horizon: int,
    epsilon: float,
    delta: float = 0.0,
    problem: MsfProblem = MsfProblem(MsfKind.EDGE_COUNT),
    max_vertices: Optional[int] = None,
) -> Tuple[int, int]:
    """
    Pick (n, d) for an item-level reduction that fits a horizon-T stream.

    Args:
        horizon (int): Stream length T
        epsilon (float): Privacy parameter of the attacked mechanism
        delta (float): Approximate-DP parameter; 0 selects the pure regime
        problem (MsfProblem): Family whose graph sizes constrain n
        max_vertices (int): Vertex budget N, unbounded by default

    Returns:
        Tuple[int, int]: Rows n and columns d of the marginals instance
    """
    if horizon < 1 or epsilon <= 0:
        raise ParameterError(f"need T >= 1 and epsilon > 0, got {horizon} and {epsilon}")
    if delta > 0:
        d = math.floor((horizon * epsilon) ** (2.0 / 3.0))
        target = math.floor(math.sqrt(d) / epsilon) if d else 0
    else:
        d = math.floor(math.sqrt(horizon * epsilon))
        target = math.floor(math.sqrt(horizon / epsilon))
    if d < 1 or target < 1:
        raise ParameterError(f"T={horizon}, epsilon={epsilon} too small for any reduction")

    n = _largest_fitting_n(problem, horizon, d, target)
    if max_vertices is not None:
        n = min(n, _largest_n_for_vertices(problem, max_vertices, target))
    if n < 1:
        raise ParameterError(
            f"no {problem.name} instance with d={d} columns fits T={horizon}"
        )
    logger.info(f"Item-level plan for T={horizon}, epsilon={epsilon}: n={n}, d={d}")
    return n, d
