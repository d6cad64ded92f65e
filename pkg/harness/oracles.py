import logging
from typing import Callable

import numpy as np

from dpstream.core import InputError, StreamKind, Update
from dpstream.graphs import DynamicGraph
from harness.gadgets import GadgetInstance

logger = logging.getLogger(__name__)


class ExactOracle:
    """Noise-free mechanism: applies every update and evaluates the statistic on release."""

    def __init__(self, kind: StreamKind, universe: int, statistic: Callable):
        self.kind = StreamKind(kind)
        self.universe = universe
        self.statistic = statistic
        self.t = 0
        if self.kind == StreamKind.GRAPH:
            self._graph = DynamicGraph(universe)
        else:
            self._frequencies = np.zeros(universe, dtype=np.int64)

    @classmethod
    def for_instance(cls, instance: GadgetInstance) -> "ExactOracle":
        stream = instance.stream
        return cls(stream.kind, stream.universe, instance.statistic)

    def step(self, update: Update):
        self.t += 1
        if self.kind == StreamKind.GRAPH:
            self._graph.apply(update)
            return
        if update.is_noop:
            return
        if update.is_edge:
            raise InputError("element oracle cannot apply an edge update")
        self._frequencies[update.item] += update.sign

    def release(self):
        if self.kind == StreamKind.GRAPH:
            return self.statistic(self._graph)
        return self.statistic(self._frequencies)


class BiasedOracle(ExactOracle):
    """Exact oracle whose every release is shifted by a constant."""

    def __init__(self, kind: StreamKind, universe: int, statistic: Callable, bias: float = 3.0):
        super().__init__(kind, universe, statistic)
        self.bias = bias

    @classmethod
    def for_instance(cls, instance: GadgetInstance, bias: float = 3.0) -> "BiasedOracle":
        stream = instance.stream
        return cls(stream.kind, stream.universe, instance.statistic, bias)

    def release(self):
        return super().release() + self.bias
