"""
Continual release of graph statistics on insertions-only edge streams: the SVT ladder for
monotone statistics and the degree histogram built from per-degree counters.
"""

import logging
import math
from enum import Enum
from typing import Iterable, Iterator, List, Optional, Tuple

import numpy as np

from dpstream.config import DEGREE_COUNTER_SENSITIVITY
from dpstream.core import (
    InputError,
    ParameterError,
    PrivacyBudget,
    RandomSource,
    StateError,
    Update,
)
from dpstream.counting import HistogramMechanism
from dpstream.graphs import (
    DynamicGraph,
    connected_components,
    core_number,
    max_matching_size,
)
from dpstream.metrics import record_saturation, record_step
from dpstream.svt import SvtAnswer, SvtInstance, svt_alpha

logger = logging.getLogger(__name__)


class GraphStatistic(str, Enum):
    MATCHING = "matching"
    CORE_NUMBER = "core_number"
    COMPONENTS = "components"


def largest_clique_size(horizon: int) -> int:
    """Largest kappa with kappa * (kappa - 1) / 2 <= horizon."""
    kappa = (1 + math.isqrt(1 + 8 * horizon)) // 2
    while kappa * (kappa - 1) // 2 > horizon:
        kappa -= 1
    while (kappa + 1) * kappa // 2 <= horizon:
        kappa += 1
    return kappa


def statistic_range(statistic: GraphStatistic, n: int, horizon: int) -> Tuple[int, int]:
    """Public range [L, R] the statistic can take within `horizon` insertions on n vertices."""
    statistic = GraphStatistic(statistic)
    if statistic == GraphStatistic.MATCHING:
        return 0, min(n // 2, horizon)
    if statistic == GraphStatistic.CORE_NUMBER:
        return 0, min(n, largest_clique_size(horizon))
    return max(n - horizon, 1), n


def evaluate_statistic(statistic: GraphStatistic, graph: DynamicGraph, vertex: int = 0) -> int:
    if statistic == GraphStatistic.MATCHING:
        return max_matching_size(graph)
    if statistic == GraphStatistic.CORE_NUMBER:
        return core_number(graph, vertex)
    return connected_components(graph)


def _ceil_root(value: int, degree: int) -> int:
    root = 1
    while root**degree < value:
        root += 1
    return root


class LadderMechanism:
    """
    Releases a monotone graph statistic as the highest threshold rung L + j*k crossed so far.

    Each step queries SVT with the current statistic against the next rung and keeps climbing
    within the step while answers are positive. Decreasing statistics run on the negated value.
    """

    def __init__(
        self,
        statistic: GraphStatistic,
        n: int,
        horizon: int,
        budget: PrivacyBudget,
        rng: RandomSource,
        k: Optional[int] = None,
        vertex: int = 0,
        sensitivity: float = 1.0,
    ):
        """
        Initialize the ladder.

        Args:
            statistic (GraphStatistic): Statistic to release
            n (int): Number of vertices
            horizon (int): Stream length T
            budget (PrivacyBudget): Budget of the inner SVT
            rng (RandomSource): Noise source
            k (int): Rung spacing, default ceil(sqrt(l)) for delta = 0 and ceil(l^(1/3)) otherwise
            vertex (int): Vertex whose core number is tracked
            sensitivity (float): Sensitivity of the statistic
        """
        self.statistic = GraphStatistic(statistic)
        if self.statistic == GraphStatistic.CORE_NUMBER and not 0 <= vertex < n:
            raise ParameterError(f"vertex {vertex} outside [0, {n})")
        self.n = n
        self.horizon = horizon
        self.vertex = vertex
        self.budget = budget
        self.graph = DynamicGraph(n)
        self.low, self.high = statistic_range(self.statistic, n, horizon)
        self.decreasing = self.statistic == GraphStatistic.COMPONENTS
        self.length = self.high - self.low

        if k is None:
            degree = 2 if budget.delta == 0 else 3
            k = _ceil_root(self.length, degree)
        if k < 1:
            raise ParameterError(f"rung spacing must be positive, got {k}")
        self.k = k
        self.cap = max(1, math.ceil(self.length / k))
        self.svt = SvtInstance(budget, self.cap, rng, sensitivity)

        # climbing happens on an increasing scale; decreasing statistics are negated
        self._top = -self.low if self.decreasing else self.high
        self._released = -self.high if self.decreasing else self.low
        self._next = self._released + k
        self.t = 0
        self.jumps = 0
        self.saturated = False
        self.last_true: Optional[int] = None

        logger.info(
            f"Ladder for {self.statistic.value} on n={n}: range [{self.low}, {self.high}], "
            f"k={self.k}, cap={self.cap}, sigma={self.svt.sigma:.3f}"
        )

    def _freeze(self):
        self.saturated = True
        record_saturation()
        logger.warning(
            f"Ladder for {self.statistic.value} frozen at {self.release()} after step {self.t}"
        )

    def step(self, update: Update) -> float:
        """Apply an insertion (or no-op) and return the released estimate."""
        if update.is_delete:
            raise InputError("ladder mechanism accepts insertions only")
        if self.t >= self.horizon:
            raise StateError(f"ladder horizon {self.horizon} exhausted")
        self.graph.apply(update)
        self.t += 1
        record_step("ladder")

        value = evaluate_statistic(self.statistic, self.graph, self.vertex)
        self.last_true = value
        query = -value if self.decreasing else value
        while not self.saturated and self._next <= self._top:
            answer = self.svt.query(query, self._next)
            if answer == SvtAnswer.NEGATIVE:
                break
            self._released = self._next
            self._next += self.k
            self.jumps += 1
            if self.svt.halted and self._next <= self._top:
                self._freeze()
        return self.release()

    def release(self) -> float:
        return float(-self._released if self.decreasing else self._released)

    def alpha_bound(self, beta: Optional[float] = None) -> float:
        """SVT accuracy over the at most T + cap queries of a run, plus one rung."""
        return (
            svt_alpha(
                self.budget,
                self.cap,
                self.horizon + self.cap,
                beta=beta,
                sensitivity=self.svt.sensitivity,
            )
            + self.k
        )


def advanced_composition_epsilon(k: int, eps_total: float, delta_prime: float) -> float:
    """Per-mechanism epsilon so that k adaptive compositions stay (eps_total, delta_prime)-DP."""
    if k < 1:
        raise ParameterError(f"k must be at least 1, got {k}")
    if not 0 < eps_total <= 1:
        raise ParameterError(f"eps_total must lie in (0, 1], got {eps_total}")
    if not 0 < delta_prime < 1:
        raise ParameterError(f"delta_prime must lie in (0, 1), got {delta_prime}")
    return eps_total / (2.0 * math.sqrt(2.0 * k * math.log(1.0 / delta_prime)))


class _DegreeRouter:
    """Turns edge insertions into counter inputs: four (column, value) pairs per update.

    Column c counts vertices of degree c + 1; (0, 0) is a no-op sub-step.
    """

    SUBSTEPS = 4

    def __init__(self, n: int):
        self.n = n
        self.degrees = np.zeros(n, dtype=np.int64)
        self.edges = set()

    def route(self, update: Update) -> List[Tuple[int, int]]:
        if update.is_delete:
            raise InputError("degree histogram accepts insertions only")
        if update.is_noop:
            return [(0, 0)] * self.SUBSTEPS
        u, v = update.edge
        if v >= self.n:
            raise InputError(f"edge ({u}, {v}) outside vertex range {self.n}")
        if (u, v) in self.edges:
            return [(0, 0)] * self.SUBSTEPS
        self.edges.add((u, v))
        routed = []
        for endpoint in (u, v):
            old = int(self.degrees[endpoint])
            self.degrees[endpoint] = old + 1
            routed.append((old - 1, -1) if old >= 1 else (0, 0))
            routed.append((old, 1))
        return routed


def degree_counter_inputs(updates: Iterable[Update], n: int) -> List[Tuple[int, int]]:
    """Full routed counter input of an insertions-only edge stream."""
    router = _DegreeRouter(n)
    routed = []
    for update in updates:
        routed.extend(router.route(update))
    return routed


class DegreeHistogramMechanism:
    """
    Continual degree histogram from one counter per degree, each at the advanced-composition
    share of the budget. Outputs are indexed by degree; position 0 is always 0.
    """

    def __init__(
        self,
        n: int,
        horizon: int,
        budget: PrivacyBudget,
        rng: RandomSource,
        sensitivity: Optional[int] = None,
    ):
        if n < 2:
            raise ParameterError(f"degree histogram needs at least 2 vertices, got {n}")
        if budget.delta == 0:
            raise ParameterError("degree histogram composes with delta > 0")
        self.n = n
        self.horizon = horizon
        self.sensitivity = sensitivity or DEGREE_COUNTER_SENSITIVITY
        self.counter_epsilon = advanced_composition_epsilon(n, budget.epsilon, budget.delta)
        self.counter_budget = PrivacyBudget.create(
            epsilon=self.counter_epsilon, beta=budget.beta, noise_mode=budget.noise_mode
        )
        self.histogram = HistogramMechanism(
            n - 1,
            _DegreeRouter.SUBSTEPS * horizon,
            self.counter_budget,
            rng,
            sensitivity=self.sensitivity,
        )
        self._router = _DegreeRouter(n)
        self._output = np.zeros(n)
        self.t = 0
        logger.info(
            f"Degree histogram on n={n}: counter epsilon {self.counter_epsilon:.5f}, "
            f"sensitivity {self.sensitivity}"
        )

    @property
    def error_bound(self) -> float:
        return self.histogram.error_bound

    def step(self, update: Update) -> np.ndarray:
        if self.t >= self.horizon:
            raise StateError(f"degree histogram horizon {self.horizon} exhausted")
        routed = self._router.route(update)
        self.t += 1
        record_step("degree_histogram")
        for column, value in routed:
            counts = self.histogram.step(column, value)
        self._output[1:] = counts
        return self.release()

    def release(self) -> np.ndarray:
        return self._output.copy()
