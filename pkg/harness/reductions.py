"""
Reduction drivers: feed a gadget stream to a mechanism, read it at the timetable steps and
decode the secret's inner products (or marginals).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from dpstream.core import (
    ContinualMechanism,
    DPStreamError,
    HarnessError,
    ParameterError,
    PrivacyBudget,
    RandomSource,
)
from dpstream.graph_mechanisms import DegreeHistogramMechanism, GraphStatistic, LadderMechanism
from dpstream.sne import BoostedSne, SneState
from harness.gadgets import GadgetInstance, GadgetProblem

logger = logging.getLogger(__name__)


@dataclass
class ReductionResult:
    """Decoded values next to the truths; `error` is decoded minus true."""

    label: str
    truths: np.ndarray
    decoded: np.ndarray
    offset: int = 0
    alpha: float = 0.0
    flagged: List[int] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return self.decoded - self.truths

    @property
    def max_error(self) -> float:
        """Largest deviation beyond the decoder's built-in offset."""
        return float(np.max(np.abs(self.errors - self.offset)))

    @property
    def mean_error(self) -> float:
        return float(np.mean(np.abs(self.errors - self.offset)))

    @property
    def round_trip_ok(self) -> bool:
        return bool(np.all(self.errors == self.offset))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "j": np.arange(1, self.truths.size + 1),
                "true_inprod": self.truths,
                "decoded": self.decoded,
                "error": self.errors,
            }
        )

    def summary(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "queries": int(self.truths.size),
            "max_error": self.max_error,
            "mean_error": self.mean_error,
            "alpha": self.alpha,
            "flagged": len(self.flagged),
        }


def run_inc_reduction(
    instance: GadgetInstance,
    mechanism: ContinualMechanism,
    alpha_hint: Optional[float] = None,
) -> ReductionResult:
    """
    Drive the gadget stream through the mechanism and decode every query.

    Args:
        instance (GadgetInstance): Generated gadget
        mechanism (ContinualMechanism): Mechanism or oracle consuming the stream
        alpha_hint (float): The mechanism's additive error; the TopK decoder subtracts it

    Returns:
        ReductionResult: Decoded values and errors
    """
    alpha = float(alpha_hint or 0.0)
    reading_steps = {entry.step for entry in instance.timetable}
    readings = {}
    for t, update in enumerate(instance.stream, start=1):
        try:
            mechanism.step(update)
        except DPStreamError as e:
            logger.error(f"Mechanism refused update {t} of {instance.label}: {str(e)}")
            raise HarnessError(str(e), step=t) from e
        if t in reading_steps:
            readings[t] = mechanism.release()

    decoded = instance.decode([readings[entry.step] for entry in instance.timetable], alpha)
    result = ReductionResult(
        label=instance.label,
        truths=np.asarray(instance.truths, dtype=np.float64),
        decoded=decoded,
        offset=instance.decode_offset,
        alpha=alpha,
        flagged=list(instance.flagged),
    )
    logger.info(
        f"Reduction {instance.label}: max error {result.max_error:.3f} over "
        f"{result.truths.size} queries"
    )
    return result


def run_topk_reduction(
    instance: GadgetInstance, mechanism: ContinualMechanism, alpha: float = 0.0
) -> ReductionResult:
    if instance.problem != GadgetProblem.TOPK:
        raise ParameterError(f"expected a TopK reduction, got {instance.problem.value}")
    return run_inc_reduction(instance, mechanism, alpha)


def run_msf_reduction(instance: GadgetInstance, mechanism: ContinualMechanism) -> ReductionResult:
    """Item-level reduction; decoded values are normalized column sums."""
    if instance.problem != GadgetProblem.MSF:
        raise ParameterError(f"expected a marginals stream, got {instance.problem.value}")
    return run_inc_reduction(instance, mechanism)


def check_round_trip(result: ReductionResult):
    """Raise when an exact-oracle run did not decode every value exactly."""
    if not result.round_trip_ok:
        bad = np.flatnonzero(result.errors != result.offset) + 1
        raise HarnessError(
            f"round trip of {result.label} failed for queries {bad.tolist()}: "
            f"errors {result.errors[bad - 1].tolist()}, expected {result.offset}"
        )


def private_mechanism(
    instance: GadgetInstance,
    budget: PrivacyBudget,
    rng: RandomSource,
    zeta: float = 0.5,
) -> ContinualMechanism:
    """The continual mechanism of this repository that the gadget attacks."""
    stream = instance.stream
    if instance.problem == GadgetProblem.MATCHING:
        return LadderMechanism(
            GraphStatistic.MATCHING, stream.universe, stream.horizon, budget, rng
        )
    if instance.problem == GadgetProblem.KCORE:
        return LadderMechanism(
            GraphStatistic.CORE_NUMBER, stream.universe, stream.horizon, budget, rng, vertex=0
        )
    if instance.problem == GadgetProblem.DEGHIST:
        return DegreeHistogramMechanism(stream.universe, stream.horizon, budget, rng)
    if instance.problem == GadgetProblem.TOPK:
        return SneState(stream.universe, stream.horizon, budget, zeta, rng)
    raise ParameterError(
        f"no private mechanism handles {instance.problem.value} streams with deletions"
    )


def mechanism_alpha(mechanism: ContinualMechanism) -> float:
    """Additive accuracy the mechanism advertises, 0 when it has none."""
    if isinstance(mechanism, LadderMechanism):
        return mechanism.alpha_bound()
    if isinstance(mechanism, DegreeHistogramMechanism):
        return mechanism.error_bound
    if isinstance(mechanism, (SneState, BoostedSne)):
        # TopK unit vectors have norm 1, so the sandwich slack is additive in every k
        return mechanism.slack
    return 0.0
