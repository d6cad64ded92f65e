"""
Tests for the sparse vector technique.
"""

import math
import os
import sys

import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream.core import NoiseMode, ParameterError, PrivacyBudget, RandomSource, StateError
from dpstream.svt import SvtAnswer, SvtInstance, svt_alpha, svt_noise_scale

QUIET = PrivacyBudget.create(epsilon=1.0, noise_mode=NoiseMode.OFF)


def test_noise_off_comparisons():
    svt = SvtInstance(QUIET, 3, RandomSource(0))
    assert svt.query(2, 3) == SvtAnswer.NEGATIVE
    assert svt.query(5, 3) == SvtAnswer.POSITIVE
    assert svt.query(3, 3) == SvtAnswer.POSITIVE
    assert svt.positives == 2
    assert svt.queries == 3


def test_halts_at_cap():
    svt = SvtInstance(QUIET, 2, RandomSource(0))
    svt.query(1, 0)
    assert not svt.halted
    svt.query(1, 0)
    assert svt.halted
    with pytest.raises(StateError):
        svt.query(1, 0)


def test_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        SvtInstance(QUIET, 0, RandomSource(0))
    with pytest.raises(ParameterError):
        SvtInstance(QUIET, 1, RandomSource(0), sensitivity=0)


def test_noise_scale():
    assert svt_noise_scale(PrivacyBudget.create(epsilon=1.0), 5) == 10.0
    approx = PrivacyBudget.create(epsilon=2.0, delta=math.exp(-1))
    assert svt_noise_scale(approx, 2) == pytest.approx(math.sqrt(64.0) / 2.0)


def test_alpha_formula():
    budget = PrivacyBudget.create(epsilon=1.0, beta=0.1)
    expected = 8 * 5 * (math.log(200) + math.log(2 * 5 / 0.1))
    assert svt_alpha(budget, 5, 200) == pytest.approx(expected)
    assert svt_alpha(budget, 5, 200, beta=0.01) > svt_alpha(budget, 5, 200)


@pytest.mark.slow
def test_accuracy_on_monotone_queries():
    budget = PrivacyBudget.create(epsilon=1.0, beta=0.1)
    cap, horizon = 5, 200
    alpha = svt_alpha(budget, cap, horizon)
    passed = 0
    for trial in range(100):
        svt = SvtInstance(budget, cap, RandomSource(trial))
        threshold, ok = 100.0, True
        for t in range(1, horizon + 1):
            if svt.halted:
                break
            q = 2.5 * t
            answer = svt.query(q, threshold)
            if answer == SvtAnswer.POSITIVE:
                ok &= q >= threshold - alpha
                threshold += 100.0
            else:
                ok &= q <= threshold + alpha
        passed += ok
    assert passed >= 90
