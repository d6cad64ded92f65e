"""
Tests for the reduction drivers, oracles and result summaries.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream.core import (
    HarnessError,
    NoiseMode,
    ParameterError,
    PrivacyBudget,
    RandomSource,
)
from dpstream import config
from dpstream.graph_mechanisms import DegreeHistogramMechanism, LadderMechanism
from dpstream.sne import SneState
from harness.gadgets import (
    build_deghist_gadget,
    build_kcore_gadget,
    build_matching_gadget,
    build_topk_reduction,
)
from harness.instances import InnerProductInstance
from harness.oracles import BiasedOracle, ExactOracle
from harness.reductions import (
    check_round_trip,
    mechanism_alpha,
    private_mechanism,
    run_inc_reduction,
    run_msf_reduction,
    run_topk_reduction,
)

QUIET = PrivacyBudget.create(epsilon=1.0, noise_mode=NoiseMode.OFF)
QUIET_APPROX = PrivacyBudget.create(epsilon=1.0, delta=1e-6, noise_mode=NoiseMode.OFF)


def test_exact_oracle_matching_has_no_error():
    instance = build_matching_gadget(5, InnerProductInstance.random(5, seed=1))
    result = run_inc_reduction(instance, ExactOracle.for_instance(instance))
    assert result.max_error == 0
    check_round_trip(result)


def test_biased_oracle_cancels_in_matching_decoder():
    instance = build_matching_gadget(4, InnerProductInstance.random(4, seed=2))
    result = run_inc_reduction(instance, BiasedOracle.for_instance(instance, bias=3.0))
    assert result.max_error == 0


def test_biased_oracle_shows_in_kcore_decoder():
    instance = build_kcore_gadget(3, InnerProductInstance.random(3, seed=2))
    result = run_inc_reduction(instance, BiasedOracle.for_instance(instance))
    assert (result.errors == 3.0).all()
    with pytest.raises(HarnessError):
        check_round_trip(result)


def test_result_frame_and_summary():
    secret = InnerProductInstance(x=[1, 0, 1], queries=[[1, 1, 1], [0, 1, 0], [1, 0, 0]])
    instance = build_topk_reduction(3, secret)
    result = run_topk_reduction(instance, ExactOracle.for_instance(instance))
    frame = result.to_frame()
    assert list(frame.columns) == ["j", "true_inprod", "decoded", "error"]
    assert frame["j"].tolist() == [1, 2, 3]
    assert frame["true_inprod"].tolist() == [2.0, 0.0, 1.0]
    assert frame["error"].tolist() == [1.0, 1.0, 1.0]
    summary = result.summary()
    assert summary["max_error"] == 0
    assert summary["queries"] == 3


def test_driver_checks_problem_type():
    instance = build_matching_gadget(2, InnerProductInstance.random(2, seed=0))
    oracle = ExactOracle.for_instance(instance)
    with pytest.raises(ParameterError):
        run_topk_reduction(instance, oracle)
    with pytest.raises(ParameterError):
        run_msf_reduction(instance, oracle)


def test_noise_off_ladder_error_below_rung_spacing():
    instance = build_matching_gadget(6, InnerProductInstance.random(6, seed=3))
    mechanism = private_mechanism(instance, QUIET, RandomSource(0))
    assert isinstance(mechanism, LadderMechanism)
    result = run_inc_reduction(instance, mechanism)
    assert result.max_error < mechanism.k
    assert mechanism_alpha(mechanism) >= mechanism.k


def test_noise_off_kcore_ladder_tracks_vertex_zero():
    instance = build_kcore_gadget(2, InnerProductInstance.random(2, seed=3))
    mechanism = private_mechanism(instance, QUIET, RandomSource(0))
    assert mechanism.vertex == 0
    result = run_inc_reduction(instance, mechanism)
    assert result.max_error < mechanism.k


def test_noise_off_degree_histogram_is_exact():
    instance = build_deghist_gadget(4, InnerProductInstance.random(4, seed=5))
    mechanism = private_mechanism(instance, QUIET_APPROX, RandomSource(0))
    assert isinstance(mechanism, DegreeHistogramMechanism)
    result = run_inc_reduction(instance, mechanism)
    assert np.array_equal(result.decoded, result.truths)


def test_oracles_advertise_no_alpha():
    instance = build_matching_gadget(2, InnerProductInstance.random(2, seed=0))
    assert mechanism_alpha(ExactOracle.for_instance(instance)) == 0.0


def test_norm_estimator_advertises_its_slack(monkeypatch):
    monkeypatch.setattr(config, "CALIBRATION_PATHS", 500)
    instance = build_topk_reduction(4, InnerProductInstance.random(4, seed=2))
    mechanism = private_mechanism(instance, PrivacyBudget.create(epsilon=1.0), RandomSource(1))
    assert isinstance(mechanism, SneState)
    assert mechanism_alpha(mechanism) == mechanism.slack
    assert mechanism_alpha(mechanism) > 0
    result = run_topk_reduction(instance, mechanism, mechanism_alpha(mechanism))
    assert result.alpha == mechanism.slack
