import logging
import math
from enum import Enum
from typing import Optional

from dpstream.core import ParameterError, PrivacyBudget, RandomSource, StateError, sample_laplace
from dpstream.metrics import record_svt_positive

logger = logging.getLogger(__name__)


class SvtAnswer(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


def svt_noise_scale(budget: PrivacyBudget, cap: int, sensitivity: float = 1.0) -> float:
    """sigma for the pure (delta = 0) or approximate (delta > 0) calibration."""
    if budget.delta == 0:
        return 2.0 * cap * sensitivity / budget.epsilon
    return math.sqrt(32.0 * cap * math.log(1.0 / budget.delta)) * sensitivity / budget.epsilon


def svt_alpha(
    budget: PrivacyBudget,
    cap: int,
    queries: int,
    beta: Optional[float] = None,
    sensitivity: float = 1.0,
) -> float:
    """
    Additive accuracy of an SVT run of `queries` queries with at most `cap` positives.

    Args:
        budget (PrivacyBudget): Budget of the instance
        cap (int): Positive-answer cap c
        queries (int): Number of queries T answered
        beta (float): Failure probability, default budget.beta
        sensitivity (float): Query sensitivity

    Returns:
        float: alpha such that, with probability 1 - beta, every Positive has q >= threshold - alpha
        and every Negative has q <= threshold + alpha
    """
    beta = budget.beta if beta is None else beta
    if cap < 1 or queries < 1:
        raise ParameterError(f"cap and queries must be positive, got {cap} and {queries}")
    log_term = math.log(queries) + math.log(2.0 * cap / beta)
    if budget.delta == 0:
        return 8.0 * cap * log_term * sensitivity / budget.epsilon
    return (
        log_term
        * math.sqrt(512.0 * cap * math.log(1.0 / budget.delta))
        * sensitivity
        / budget.epsilon
    )


class SvtInstance:
    """Sparse vector technique answering adaptively chosen (query value, threshold) pairs.

    The instance only sees query values; callers are responsible for the queries having the
    declared sensitivity.
    """

    def __init__(
        self,
        budget: PrivacyBudget,
        cap: int,
        rng: RandomSource,
        sensitivity: float = 1.0,
    ):
        if cap < 1:
            raise ParameterError(f"positive-answer cap must be at least 1, got {cap}")
        if not sensitivity > 0:
            raise ParameterError(f"sensitivity must be positive, got {sensitivity}")
        self.budget = budget
        self.cap = cap
        self.sensitivity = sensitivity
        self.rng = rng
        self.sigma = svt_noise_scale(budget, cap, sensitivity)
        self.positives = 0
        self.queries = 0
        self.halted = False
        self._rho = self._threshold_noise()

    def _threshold_noise(self) -> float:
        return sample_laplace(self.sigma, self.rng, self.budget.noise_mode)

    def query(self, q_value: float, threshold: float) -> SvtAnswer:
        """Compare q_value + Lap(2 sigma) against threshold + rho."""
        if self.halted:
            raise StateError(f"SVT halted after {self.positives} positive answers")
        self.queries += 1
        nu = sample_laplace(2.0 * self.sigma, self.rng, self.budget.noise_mode)
        if q_value + nu < threshold + self._rho:
            return SvtAnswer.NEGATIVE

        self.positives += 1
        record_svt_positive()
        self._rho = self._threshold_noise()
        if self.positives >= self.cap:
            self.halted = True
            logger.debug(f"SVT halted after {self.queries} queries")
        return SvtAnswer.POSITIVE
