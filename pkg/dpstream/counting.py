"""
Binary-tree continual counting, the n-column continual histogram, and the Monte Carlo
error bound both are measured against.
"""

import functools
import logging
import math
import os
import time
from enum import Enum
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dpstream import config
from dpstream.core import (
    ParameterError,
    PrivacyBudget,
    RandomSource,
    StateError,
    laplace_from_uniform,
    sample_laplace,
)
from dpstream.metrics import record_calibration
from dpstream.tables import read_csv, write_csv

logger = logging.getLogger(__name__)

# Upper limit on simulated noise entries held in memory per calibration batch
_BATCH_CELLS = 4_000_000


class BoundVariant(str, Enum):
    PURE = "pure"
    APPROX = "approx"


def tree_height(horizon: int) -> int:
    """ceil(log2(horizon)); 0 for a single step."""
    if horizon < 1:
        raise ParameterError(f"horizon must be positive, got {horizon}")
    return (horizon - 1).bit_length()


class CounterBank:
    """`width` independent binary-tree counters driven by one shared clock.

    Node values are kept Chan-style: at step t the node at the lowest set bit of t absorbs
    every lower node plus the new input and receives its own Laplace draw; the release is the
    sum of the noisy nodes at the set bits of t, so at most height+1 draws enter any output.
    """

    def __init__(
        self,
        horizon: int,
        budget: PrivacyBudget,
        rng: RandomSource,
        width: int = 1,
        sensitivity: float = 1.0,
    ):
        if width < 1:
            raise ParameterError(f"width must be positive, got {width}")
        if not sensitivity > 0:
            raise ParameterError(f"sensitivity must be positive, got {sensitivity}")
        self.horizon = horizon
        self.height = tree_height(horizon)
        self.padded_horizon = 1 << self.height
        self.width = width
        self.budget = budget
        self.rng = rng
        self.scale = sensitivity * (self.height + 1) / budget.epsilon
        self.t = 0
        self._exact = np.zeros((self.height + 1, width))
        self._noisy = np.zeros((self.height + 1, width))
        self._output = np.zeros(width)

    def step(self, values) -> np.ndarray:
        if self.t >= self.horizon:
            raise StateError(f"counter horizon {self.horizon} exhausted")
        values = np.broadcast_to(np.asarray(values, dtype=np.float64), (self.width,))
        self.t += 1
        level = (self.t & -self.t).bit_length() - 1
        self._exact[level] = self._exact[:level].sum(axis=0) + values
        self._exact[:level] = 0.0
        noise = sample_laplace(self.scale, self.rng, self.budget.noise_mode, size=self.width)
        self._noisy[level] = self._exact[level] + noise
        self._noisy[:level] = 0.0
        levels = [j for j in range(self.height + 1) if (self.t >> j) & 1]
        self._output = self._noisy[levels].sum(axis=0)
        return self._output.copy()

    def release(self) -> np.ndarray:
        return self._output.copy()


def _check_unit(v) -> int:
    if v not in (-1, 0, 1):
        raise ParameterError(f"counter input must be -1, 0 or 1, got {v}")
    return int(v)


class TreeCounter:
    """Single continual counter over a stream of values in {-1, 0, 1}."""

    def __init__(
        self,
        horizon: int,
        budget: PrivacyBudget,
        rng: RandomSource,
        sensitivity: float = 1.0,
    ):
        self._bank = CounterBank(horizon, budget, rng, width=1, sensitivity=sensitivity)

    @property
    def t(self) -> int:
        return self._bank.t

    @property
    def height(self) -> int:
        return self._bank.height

    @property
    def scale(self) -> float:
        return self._bank.scale

    def step(self, v: int) -> float:
        """Consume one value and return the noisy prefix sum."""
        return float(self._bank.step(_check_unit(v))[0])

    def release(self) -> float:
        return float(self._bank.release()[0])


class HistogramMechanism:
    """
    Continual n-column histogram: one tree counter per column, each at the full budget.

    With `shift` the outputs are moved down by the error bound E, so whenever the realized
    noise stays within E every output lies in [true - 2E, true].
    """

    def __init__(
        self,
        columns: int,
        horizon: int,
        budget: PrivacyBudget,
        rng: RandomSource,
        shift: bool = False,
        sensitivity: float = 1.0,
        error_bound: Optional[float] = None,
    ):
        if columns < 1:
            raise ParameterError(f"histogram needs at least one column, got {columns}")
        self.columns = columns
        self.horizon = horizon
        self.budget = budget
        self.shift = shift
        self.sensitivity = sensitivity
        self._bank = CounterBank(horizon, budget, rng, width=columns, sensitivity=sensitivity)
        if error_bound is not None:
            if error_bound < 0:
                raise ParameterError(f"error bound must be nonnegative, got {error_bound}")
            self.__dict__["error_bound"] = float(error_bound)
        self._routed = np.zeros(columns)

    @cached_property
    def error_bound(self) -> float:
        return compute_error_bound(
            self.columns, self.budget, self.horizon, sensitivity=self.sensitivity
        )

    @property
    def t(self) -> int:
        return self._bank.t

    def step(self, column: int, v: int) -> np.ndarray:
        """Route v to `column` (0 elsewhere) and return all column outputs."""
        if not 0 <= column < self.columns:
            raise ParameterError(f"column {column} outside [0, {self.columns})")
        self._routed[:] = 0.0
        self._routed[column] = _check_unit(v)
        output = self._bank.step(self._routed)
        if self.shift:
            output -= self.error_bound
        return output

    def release(self) -> np.ndarray:
        output = self._bank.release()
        if self.shift:
            output -= self.error_bound
        return output


def tree_node_sums(values: Sequence[float], horizon: int) -> Dict[Tuple[int, int], float]:
    """Exact partial sums of every dyadic node completed by `values`, keyed by (level, index)."""
    height = tree_height(horizon)
    values = np.asarray(values, dtype=np.float64)
    if len(values) > horizon:
        raise ParameterError(f"{len(values)} values exceed horizon {horizon}")
    sums = {}
    for level in range(height + 1):
        width = 1 << level
        for index in range(len(values) // width):
            sums[(level, index)] = float(values[index * width : (index + 1) * width].sum())
    return sums


def node_sum_differences(
    routed_a: Sequence[Tuple[int, int]],
    routed_b: Sequence[Tuple[int, int]],
    columns: int,
    horizon: int,
) -> Dict[int, int]:
    """Per column, how many dyadic node sums differ between two routed input streams."""
    if len(routed_a) != len(routed_b):
        raise ParameterError("routed streams must have the same length")
    differences = {}
    for column in range(columns):
        a = [v if c == column else 0 for c, v in routed_a]
        b = [v if c == column else 0 for c, v in routed_b]
        sums_a = tree_node_sums(a, horizon)
        sums_b = tree_node_sums(b, horizon)
        changed = sum(1 for key in sums_a if sums_a[key] != sums_b[key])
        if changed:
            differences[column] = changed
    return differences


@functools.lru_cache(maxsize=32)
def _unit_max_noise(horizon: int, paths: int, seed: int, chunk: int) -> np.ndarray:
    """Sorted per-path max_t |noise_t| of one counter at epsilon=1, sensitivity 1."""
    start_time = time.time()
    height = tree_height(horizon)
    scale = float(height + 1)
    rng = RandomSource(seed)
    steps = np.arange(1, horizon + 1)
    batch = max(1, min(chunk, _BATCH_CELLS // horizon))
    maxima = np.empty(paths)

    for start in range(0, paths, batch):
        size = min(batch, paths - start)
        noise = np.zeros((size, horizon))
        for level in range(height + 1):
            nodes = horizon >> level
            if nodes == 0:
                continue
            covered = ((steps >> level) & 1) == 1
            draws = laplace_from_uniform(rng.uniforms(size * nodes), scale)
            draws = draws.reshape(size, nodes)
            noise[:, covered] += draws[:, (steps[covered] >> level) - 1]
        maxima[start : start + size] = np.abs(noise).max(axis=1)

    elapsed = time.time() - start_time
    record_calibration(elapsed)
    logger.info(
        f"Calibrated tree noise for T={horizon} over {paths} paths in {elapsed:.2f} seconds"
    )
    return np.sort(maxima)


def _upper_quantile(sorted_maxima: np.ndarray, tail: float) -> float:
    """Smallest sample value exceeded by at most a `tail` fraction of the samples."""
    allowed = int(math.floor(tail * len(sorted_maxima)))
    allowed = min(allowed, len(sorted_maxima) - 1)
    return float(sorted_maxima[len(sorted_maxima) - 1 - allowed])


@functools.lru_cache(maxsize=1024)
def _cached_bound(
    columns: int,
    horizon: int,
    epsilon: float,
    beta: float,
    delta: float,
    sensitivity: float,
    variant: BoundVariant,
    paths: int,
    seed: int,
    chunk: int,
) -> float:
    maxima = _unit_max_noise(horizon, paths, seed, chunk)
    if variant == BoundVariant.PURE:
        # columns are independent, so each may fail with 1 - (1 - beta)^(1/n)
        tail = -math.expm1(math.log1p(-beta) / columns)
        return sensitivity * _upper_quantile(maxima, tail) / epsilon

    if not delta > 0:
        raise ParameterError("the approximate-DP bound needs delta > 0")
    log_horizon = max(math.log2(horizon), 1.0)
    constant = _upper_quantile(maxima, beta) / (
        math.sqrt(math.log(horizon / beta)) * log_horizon
    )
    return (
        sensitivity
        * constant
        * math.sqrt(math.log(columns * horizon / beta))
        * log_horizon
        * math.sqrt(math.log(1.0 / delta))
        / epsilon
    )


def compute_error_bound(
    columns: int,
    params: PrivacyBudget,
    horizon: int,
    sensitivity: float = 1.0,
    variant: Optional[BoundVariant] = None,
    paths: Optional[int] = None,
    seed: Optional[int] = None,
) -> float:
    """
    Error bound E of the continual histogram over `columns` columns and `horizon` steps.

    Args:
        columns (int): Number of histogram columns n
        params (PrivacyBudget): Budget of every column (epsilon, delta, beta)
        horizon (int): Stream length T
        sensitivity (float): Per-column input sensitivity
        variant (BoundVariant): PURE (default when delta == 0) or APPROX
        paths (int): Monte Carlo paths, default CALIBRATION_PATHS
        seed (int): Simulation seed, default CALIBRATION_SEED

    Returns:
        float: E such that the max over steps and columns of |noise| exceeds E with
        empirical frequency at most beta
    """
    if columns < 1:
        raise ParameterError(f"columns must be positive, got {columns}")
    tree_height(horizon)
    if variant is None:
        variant = BoundVariant.APPROX if params.delta > 0 else BoundVariant.PURE
    return _cached_bound(
        columns,
        horizon,
        params.epsilon,
        params.beta,
        params.delta,
        float(sensitivity),
        BoundVariant(variant),
        paths or config.CALIBRATION_PATHS,
        config.CALIBRATION_SEED if seed is None else seed,
        config.CALIBRATION_CHUNK,
    )


def calibrate_rows(
    settings: Iterable[Tuple[int, int, float, float]],
    paths: Optional[int] = None,
    seed: Optional[int] = None,
) -> pd.DataFrame:
    """Error bounds for (n, T, epsilon, beta) tuples as golden-file rows."""
    rows = []
    for columns, horizon, epsilon, beta in settings:
        budget = PrivacyBudget.create(epsilon=epsilon, beta=beta)
        bound = compute_error_bound(columns, budget, horizon, paths=paths, seed=seed)
        rows.append(
            {"n": columns, "T": horizon, "epsilon": epsilon, "beta": beta, "E": bound}
        )
    return pd.DataFrame(rows, columns=["n", "T", "epsilon", "beta", "E"])


def append_golden_rows(rows: pd.DataFrame, path: Optional[str] = None) -> str:
    """Append calibrated rows to the golden error-bounds file."""
    path = path or config.ERROR_BOUNDS_FILE
    if os.path.exists(path):
        rows = pd.concat([read_csv(path), rows], ignore_index=True)
    return write_csv(rows, path, "error_bounds")


def load_golden_bounds(path: Optional[str] = None) -> List[dict]:
    path = path or config.ERROR_BOUNDS_FILE
    if not os.path.exists(path):
        return []
    return read_csv(path).to_dict("records")
