import logging
from dataclasses import dataclass, replace

import numpy as np

from dpstream.core import ParameterError, RandomSource

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InnerProductInstance:
    """Secret bit vector x and m public query vectors, one per row of `queries`."""

    x: np.ndarray
    queries: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.int64)
        queries = np.atleast_2d(np.asarray(self.queries, dtype=np.int64))
        if x.ndim != 1 or x.size < 1:
            raise ParameterError("secret must be a nonempty vector")
        if queries.shape[1] != x.size:
            raise ParameterError(
                f"queries have length {queries.shape[1]}, secret has length {x.size}"
            )
        if not np.isin(x, (0, 1)).all() or not np.isin(queries, (0, 1)).all():
            raise ParameterError("secret and queries must be 0/1 vectors")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "queries", queries)

    @classmethod
    def random(cls, d: int, seed: int, psi: int = 1) -> "InnerProductInstance":
        """Uniform secret and psi * d uniform queries."""
        if d < 1 or psi < 1:
            raise ParameterError(f"d and psi must be positive, got {d} and {psi}")
        generator = RandomSource(seed).generator
        x = generator.integers(0, 2, size=d)
        queries = generator.integers(0, 2, size=(psi * d, d))
        return cls(x, queries)

    @property
    def d(self) -> int:
        return int(self.x.size)

    @property
    def m(self) -> int:
        return int(self.queries.shape[0])

    def answers(self) -> np.ndarray:
        return self.queries @ self.x

    def with_flipped(self, index: int) -> "InnerProductInstance":
        x = self.x.copy()
        x[index] = 1 - x[index]
        return replace(self, x=x)


@dataclass(frozen=True)
class MarginalsInstance:
    """Private n x d bit matrix; one row per individual."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.int64)
        if matrix.ndim != 2 or 0 in matrix.shape:
            raise ParameterError("marginals matrix must be a nonempty 2-d array")
        if not np.isin(matrix, (0, 1)).all():
            raise ParameterError("marginals matrix must be 0/1")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def random(cls, n: int, d: int, seed: int) -> "MarginalsInstance":
        generator = RandomSource(seed).generator
        return cls(generator.integers(0, 2, size=(n, d)))

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def d(self) -> int:
        return int(self.matrix.shape[1])

    def column_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def normalized_column_sums(self) -> np.ndarray:
        return self.column_sums() / self.n

    def with_row(self, index: int, row) -> "MarginalsInstance":
        matrix = self.matrix.copy()
        matrix[index] = row
        return replace(self, matrix=matrix)
