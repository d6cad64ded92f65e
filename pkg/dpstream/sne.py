"""
Monotone symmetric norms of a private frequency vector.

The continual estimator keeps two shifted histograms: one over the n element counts, one over
the sizes of geometric frequency levels. Its output E is a proxy vector built from the heavy
elements and the heavy levels, and any monotone symmetric norm of E approximates the same
norm of the true frequency vector.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from dpstream.core import (
    InputError,
    ParameterError,
    PrivacyBudget,
    RandomSource,
    StateError,
    Update,
    UpdateKind,
)
from dpstream.counting import CounterBank, HistogramMechanism, compute_error_bound
from dpstream.metrics import record_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LpNorm:
    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise ParameterError(f"p must be at least 1, got {self.p}")


@dataclass(frozen=True)
class TopKNorm:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class CustomNorm:
    """Caller-supplied monotone symmetric norm; `unit` is its value on a standard basis vector."""

    evaluator: Callable[[np.ndarray], float]
    unit: float
    name: str = "custom"

    def __post_init__(self):
        if not self.unit > 0:
            raise ParameterError(f"unit value must be positive, got {self.unit}")


NormSpec = Union[LpNorm, TopKNorm, CustomNorm]


def parse_norm(text: str) -> NormSpec:
    """Parse 'l1', 'l2', 'linf', 'lp:<p>' or 'topk:<k>'."""
    text = text.strip().lower()
    try:
        if text == "linf":
            return LpNorm(math.inf)
        if text.startswith("lp:"):
            return LpNorm(float(text[3:]))
        if text.startswith("topk:"):
            return TopKNorm(int(text[5:]))
        if text.startswith("l") and text[1:].isdigit():
            return LpNorm(float(text[1:]))
    except ValueError:
        pass
    raise ParameterError(f"unknown norm {text!r}")


def eval_norm(spec: NormSpec, v: Sequence[float]) -> float:
    magnitudes = np.abs(np.asarray(v, dtype=np.float64))
    if isinstance(spec, LpNorm):
        if magnitudes.size == 0:
            return 0.0
        if math.isinf(spec.p):
            return float(magnitudes.max())
        return float(np.linalg.norm(magnitudes, ord=spec.p))
    if isinstance(spec, TopKNorm):
        if spec.k > magnitudes.size:
            raise ParameterError(f"k={spec.k} exceeds dimension {magnitudes.size}")
        return float(np.sort(magnitudes)[::-1][: spec.k].sum())
    if isinstance(spec, CustomNorm):
        return float(spec.evaluator(magnitudes))
    raise ParameterError(f"unsupported norm spec {spec!r}")


def unit_value(spec: NormSpec) -> float:
    return spec.unit if isinstance(spec, CustomNorm) else 1.0


def topk_all(v: Sequence[float]) -> np.ndarray:
    """Every TopK norm of v at once; entry k-1 holds the Top-k norm."""
    return np.cumsum(np.sort(np.abs(np.asarray(v, dtype=np.float64)))[::-1])


def audit_norm(spec: NormSpec, dim: int, trials: int = 200, seed: int = 0) -> bool:
    """Randomized check that `spec` is symmetric and monotone in absolute values."""
    generator = RandomSource(seed).generator
    for trial in range(trials):
        x = generator.normal(scale=10.0, size=dim)
        value = eval_norm(spec, x)
        tolerance = 1e-9 * max(1.0, abs(value))
        permuted = generator.permutation(x) * generator.choice([-1.0, 1.0], size=dim)
        if abs(eval_norm(spec, permuted) - value) > tolerance:
            raise ParameterError(f"norm is not symmetric (trial {trial})")
        shrunk = x * generator.uniform(0.0, 1.0, size=dim)
        if eval_norm(spec, shrunk) > value + tolerance:
            raise ParameterError(f"norm is not monotone (trial {trial})")
    return True


def static_topk(
    frequencies: Sequence[int], budget: PrivacyBudget, rng: RandomSource
) -> np.ndarray:
    """Private Top-k estimates for every k from one pass of a tree counter over sorted counts."""
    ordered = np.sort(np.abs(np.asarray(frequencies, dtype=np.float64)))[::-1]
    if ordered.size == 0:
        return ordered
    counter = CounterBank(ordered.size, budget, rng)
    return np.array([counter.step(value)[0] for value in ordered])


def static_topk_error_bound(n: int, budget: PrivacyBudget) -> float:
    return compute_error_bound(1, budget, n)


def level_count(tau_f: float, zeta: float) -> int:
    """ceil(log_{1+zeta}(tau_f)), at least 1."""
    base = 1.0 + zeta
    if tau_f <= base:
        return 1
    levels = max(1, math.ceil(math.log(tau_f) / math.log(base)))
    while base ** (levels - 1) >= tau_f:
        levels -= 1
    while base**levels < tau_f:
        levels += 1
    return levels


class LevelTracker:
    """
    Exact level membership of every element.

    Level i holds elements with frequency in [(1+zeta)^(i-1), (1+zeta)^i) that do not exceed
    tau_f; past tau_f an element leaves the levels for good.
    """

    def __init__(self, n: int, tau_f: float, zeta: float):
        self.n = n
        self.tau_f = tau_f
        self.base = 1.0 + zeta
        self.levels = level_count(tau_f, zeta)
        self.frequencies = np.zeros(n, dtype=np.int64)
        self.sizes = np.zeros(self.levels, dtype=np.int64)

    def level_of(self, frequency: int) -> int:
        """Level index in 1..levels, or 0 when the element is in no level."""
        if frequency <= 0 or frequency > self.tau_f:
            return 0
        level = int(math.floor(math.log(frequency) / math.log(self.base))) + 1
        while level > 1 and self.base ** (level - 1) > frequency:
            level -= 1
        while self.base**level <= frequency:
            level += 1
        return min(level, self.levels)

    def step(self, item: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """Count one insertion of `item`; return the (leave, enter) level-histogram inputs."""
        old = int(self.frequencies[item])
        self.frequencies[item] = old + 1
        old_level = self.level_of(old)
        new_level = self.level_of(old + 1)
        if old_level == new_level:
            return (0, 0), (0, 0)
        leave = (old_level - 1, -1) if old_level else (0, 0)
        enter = (new_level - 1, 1) if new_level else (0, 0)
        if old_level:
            self.sizes[old_level - 1] -= 1
        if new_level:
            self.sizes[new_level - 1] += 1
        return leave, enter

    @property
    def high_count(self) -> int:
        return int((self.frequencies > self.tau_f).sum())

    @property
    def zero_count(self) -> int:
        return int((self.frequencies == 0).sum())


def level_update_stream(
    items: Sequence[Optional[int]], n: int, tau_f: float, zeta: float
) -> List[Tuple[int, int]]:
    """Level-histogram input of an insertion stream (None marks a no-op), two entries per step."""
    tracker = LevelTracker(n, tau_f, zeta)
    routed = []
    for item in items:
        if item is None:
            routed.extend([(0, 0), (0, 0)])
        else:
            routed.extend(tracker.step(item))
    return routed


class SneState:
    """Continual estimator of every monotone symmetric norm of an insertions-only stream."""

    def __init__(
        self,
        n: int,
        horizon: int,
        budget: PrivacyBudget,
        zeta: float,
        rng: RandomSource,
        tau_f: Optional[float] = None,
        h1_bound: Optional[float] = None,
        h2_bound: Optional[float] = None,
    ):
        """
        Initialize the estimator.

        Args:
            n (int): Universe size
            horizon (int): Stream length T
            budget (PrivacyBudget): Total budget, split evenly between the two histograms
            zeta (float): Accuracy parameter in (0, 1/2]
            rng (RandomSource): Noise source; children are spawned per histogram
            tau_f (float): Fixed frequency threshold instead of a uniform draw
            h1_bound (float): Element-histogram error bound instead of the calibrated one
            h2_bound (float): Level-histogram error bound instead of the calibrated one
        """
        if not 0 < zeta <= 0.5:
            raise ParameterError(f"zeta must lie in (0, 1/2], got {zeta}")
        if n < 1:
            raise ParameterError(f"universe size must be positive, got {n}")
        self.n = n
        self.horizon = horizon
        self.budget = budget
        self.zeta = zeta
        h1_rng, h2_rng, threshold_rng = rng.spawn(3)

        h1_budget = budget.scaled(0.5)
        if h1_bound is None:
            h1_bound = compute_error_bound(n, h1_budget, horizon)
        self.bound_h1 = h1_bound
        if tau_f is None:
            tau_f = threshold_rng.uniform(
                4.0 * h1_bound / zeta**2, (4.0 + 2.0 * zeta) * h1_bound / zeta**2
            )
        self.tau_f = float(tau_f)
        self.tracker = LevelTracker(n, self.tau_f, zeta)
        self.levels = self.tracker.levels

        h2_budget = budget.scaled(1.0 / (2 * self.levels))
        self.h1 = HistogramMechanism(n, horizon, h1_budget, h1_rng, shift=True, error_bound=h1_bound)
        self.h2 = HistogramMechanism(
            self.levels, 2 * horizon, h2_budget, h2_rng, shift=True, error_bound=h2_bound
        )
        self.bound_h2 = self.h2.error_bound
        self.tau_b = self.bound_h2 / zeta
        self.t = 0
        self._estimate = np.zeros(n)
        logger.debug(
            f"SNE state n={n} T={horizon}: tau_f={self.tau_f:.2f}, levels={self.levels}, "
            f"tau_b={self.tau_b:.2f}"
        )

    @property
    def slack(self) -> float:
        """Additive slack A of the lower sandwich bound, in units of the norm's unit value."""
        return self.tau_f * self.tau_b * (1.0 + self.zeta) ** 3 / self.zeta

    @property
    def estimate(self) -> np.ndarray:
        return self._estimate.copy()

    def step(self, update: Update) -> np.ndarray:
        """Consume one insertion (or no-op) and return the proxy vector E."""
        if update.kind not in (UpdateKind.INSERT_ELEMENT, UpdateKind.NOOP):
            raise InputError(f"norm estimator accepts element insertions only, got {update.kind.value}")
        if self.t >= self.horizon:
            raise StateError(f"norm estimator horizon {self.horizon} exhausted")
        if update.is_noop:
            f_hat = self.h1.step(0, 0)
            leave, enter = (0, 0), (0, 0)
        else:
            if update.item >= self.n:
                raise InputError(f"element {update.item} outside universe {self.n}")
            f_hat = self.h1.step(update.item, 1)
            leave, enter = self.tracker.step(update.item)
        self.h2.step(*leave)
        b_hat = self.h2.step(*enter)
        self.t += 1
        record_step("sne")
        self._estimate = self._proxy_vector(f_hat, b_hat)
        return self.estimate

    def release(self) -> np.ndarray:
        return self.estimate

    def query(self, spec: NormSpec) -> float:
        return eval_norm(spec, self._estimate)

    def _proxy_vector(self, f_hat: np.ndarray, b_hat: np.ndarray) -> np.ndarray:
        estimate = np.zeros(self.n)
        high = f_hat[f_hat > self.tau_f]
        free = self.n - high.size
        if high.size:
            estimate[free:] = high

        position = 0
        for index in np.flatnonzero(b_hat >= self.tau_b):
            copies = int(math.floor(b_hat[index]))
            if copies <= 0:
                continue
            placed = min(copies, free - position)
            if placed < copies:
                logger.warning(f"Level {index + 1} truncated from {copies} to {placed} copies")
            if placed <= 0:
                break
            estimate[position : position + placed] = self.tracker.base ** (index + 1)
            position += placed
        return estimate


def boosted_copy_count(horizon: int, beta: float) -> int:
    return max(1, math.ceil(math.log(horizon / beta)))


class BoostedSne:
    """Independent estimator copies at an even share of the budget; queries take the median."""

    def __init__(
        self,
        n: int,
        horizon: int,
        budget: PrivacyBudget,
        zeta: float,
        rng: RandomSource,
        copies: Optional[int] = None,
    ):
        count = copies or boosted_copy_count(horizon, budget.beta)
        share = budget.scaled(1.0 / count)
        self.copies = [
            SneState(n, horizon, share, zeta, child) for child in rng.spawn(count)
        ]
        logger.info(f"Boosted norm estimator with {count} copies at epsilon {share.epsilon:.4f}")

    @property
    def slack(self) -> float:
        return max(state.slack for state in self.copies)

    def step(self, update: Update):
        for state in self.copies:
            state.step(update)

    def release(self) -> List[np.ndarray]:
        return [state.estimate for state in self.copies]

    def query(self, spec: NormSpec) -> float:
        return boosted_query(self.copies, spec)


def boosted_query(copies: Sequence[SneState], spec: NormSpec) -> float:
    """Median of the norm over the copies' proxy vectors."""
    if not copies:
        raise StateError("boosted query needs at least one copy")
    return float(np.median([state.query(spec) for state in copies]))
