"""
Tests for the inner-product gadgets: exact readings at every timetable step, sizes, decoders.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream.core import HarnessError, ParameterError, StreamKind
from dpstream.graphs import (
    DynamicGraph,
    exhaustive_core_number,
    exhaustive_matching_size,
)
from harness.gadgets import (
    GADGET_BUILDERS,
    GadgetProblem,
    build_deghist_gadget,
    build_kcore_gadget,
    build_matching_gadget,
    build_topk_reduction,
    check_kcore_certificate,
    deghist_sizes,
    kcore_sizes,
    matching_sizes,
)
from harness.instances import InnerProductInstance
from harness.oracles import ExactOracle
from harness.reductions import run_inc_reduction

SEEDS = range(20)
DIMENSIONS = range(1, 7)


def exact_readings(instance):
    """Oracle output at every timetable step, in timetable order."""
    oracle = ExactOracle.for_instance(instance)
    by_step = {}
    steps = {entry.step for entry in instance.timetable}
    for t, update in enumerate(instance.stream, start=1):
        oracle.step(update)
        if t in steps:
            by_step[t] = oracle.release()
    return [by_step[entry.step] for entry in instance.timetable]


@pytest.mark.parametrize("d", DIMENSIONS)
def test_matching_gadget_readings(d):
    for seed in SEEDS:
        secret = InnerProductInstance.random(d, seed)
        instance = build_matching_gadget(d, secret)
        answers = secret.answers()
        for entry, reading in zip(instance.timetable, exact_readings(instance)):
            j = entry.query
            expected = j * d if entry.query_kind == "pre" else j * d + answers[j - 1]
            assert reading == expected


@pytest.mark.parametrize("d", DIMENSIONS)
def test_kcore_gadget_readings(d):
    for seed in SEEDS:
        secret = InnerProductInstance.random(d, seed)
        instance = build_kcore_gadget(d, secret)
        answers = secret.answers()
        for entry, reading in zip(instance.timetable, exact_readings(instance)):
            j = entry.query
            expected = 2 * j * d if entry.query_kind == "pre" else 2 * j * d + answers[j - 1]
            assert reading == expected


@pytest.mark.parametrize("d", DIMENSIONS)
def test_deghist_gadget_readings(d):
    for seed in SEEDS:
        secret = InnerProductInstance.random(d, seed)
        instance = build_deghist_gadget(d, secret)
        answers = secret.answers()
        for entry, reading in zip(instance.timetable, exact_readings(instance)):
            expected = answers[entry.query - 1] if entry.query_kind == "post" else 0
            assert reading[entry.query + 1] == expected


@pytest.mark.parametrize("problem", list(GADGET_BUILDERS))
@pytest.mark.parametrize("d", DIMENSIONS)
def test_exact_oracle_round_trip(problem, d):
    for seed in SEEDS:
        secret = InnerProductInstance.random(d, seed)
        instance = GADGET_BUILDERS[problem](d, secret)
        oracle = ExactOracle.for_instance(instance)
        result = run_inc_reduction(instance, oracle)
        assert result.round_trip_ok, (problem, d, seed)
        assert result.max_error == 0


def test_small_gadgets_agree_with_exhaustive_oracles():
    secret = InnerProductInstance(x=[1], queries=[[1]])
    matching = build_matching_gadget(1, secret)
    assert matching.stream.universe == matching_sizes(1, 1)[0] == 5
    graph = DynamicGraph.from_stream(matching.stream, matching.timetable[1].step)
    assert exhaustive_matching_size(graph) == 1 + 1

    kcore = build_kcore_gadget(1, secret)
    assert kcore.stream.universe == kcore_sizes(1, 1)[0] == 6
    graph = DynamicGraph.from_stream(kcore.stream, kcore.timetable[1].step)
    assert exhaustive_core_number(graph, 0) == 2 + 1


@pytest.mark.parametrize("d", DIMENSIONS)
def test_sizes_within_budgets(d):
    secret = InnerProductInstance.random(d, seed=d)
    m = secret.m
    for builder, sizes in (
        (build_matching_gadget, matching_sizes),
        (build_kcore_gadget, kcore_sizes),
        (build_deghist_gadget, deghist_sizes),
    ):
        instance = builder(d, secret)
        vertices, steps = sizes(d, m)
        assert instance.stream.universe <= vertices == instance.vertex_budget
        assert len(instance.stream) <= steps == instance.step_budget
    topk = build_topk_reduction(d, secret)
    assert topk.stream.kind == StreamKind.ELEMENTS
    assert topk.stream.universe == d
    assert len(topk.stream) == d + 2 * m * d


def test_matching_sizes():
    assert matching_sizes(2, 2) == (14, 12)
    assert kcore_sizes(1, 1) == (6, math.comb(4, 2) + 2 + 1 + 1 + 4)


def test_zero_secret_decodes_zero():
    for problem, builder in GADGET_BUILDERS.items():
        secret = InnerProductInstance(x=np.zeros(4, dtype=int), queries=np.ones((4, 4), dtype=int))
        instance = builder(4, secret)
        result = run_inc_reduction(instance, ExactOracle.for_instance(instance))
        assert (result.decoded == instance.decode_offset).all(), problem


def test_topk_decoder_offset():
    secret = InnerProductInstance(x=[1, 1, 0, 1], queries=[[1, 0, 1, 1], [0, 0, 1, 0]])
    instance = build_topk_reduction(4, secret)
    result = run_inc_reduction(instance, ExactOracle.for_instance(instance))
    assert result.truths.tolist() == [2.0, 0.0]
    assert result.decoded.tolist() == [3.0, 1.0]
    assert not result.flagged


def test_topk_all_ones_is_flagged():
    secret = InnerProductInstance(x=[1, 1, 1], queries=[[1, 1, 1]])
    instance = build_topk_reduction(3, secret)
    result = run_inc_reduction(instance, ExactOracle.for_instance(instance))
    assert result.decoded.tolist() == [4.0]
    assert result.flagged == [1]


@pytest.mark.parametrize("d", range(1, 5))
def test_kcore_certificate_holds(d):
    for seed in range(5):
        secret = InnerProductInstance.random(d, seed)
        check_kcore_certificate(build_kcore_gadget(d, secret), secret)


def test_kcore_certificate_catches_wrong_secret():
    secret = InnerProductInstance(x=[1, 0], queries=[[1, 1], [0, 1]])
    instance = build_kcore_gadget(2, secret)
    other = InnerProductInstance(x=[0, 0], queries=[[1, 1], [0, 1]])
    with pytest.raises(HarnessError) as excinfo:
        check_kcore_certificate(instance, other)
    assert excinfo.value.step == instance.timetable[1].step
    with pytest.raises(ParameterError):
        check_kcore_certificate(build_matching_gadget(2, secret), secret)


def test_dimension_mismatch_rejected():
    secret = InnerProductInstance.random(3, seed=0)
    with pytest.raises(ParameterError):
        build_matching_gadget(4, secret)


def test_deghist_needs_enough_queries():
    secret = InnerProductInstance(x=np.ones(5, dtype=int), queries=[[1, 0, 1, 0, 1]])
    with pytest.raises(ParameterError):
        build_deghist_gadget(5, secret)


def test_deghist_decoder_is_lipschitz():
    secret = InnerProductInstance.random(4, seed=11)
    instance = build_deghist_gadget(4, secret)
    readings = exact_readings(instance)
    clean = instance.decode(readings)
    generator = np.random.default_rng(5)
    for _ in range(20):
        perturbations = [generator.normal(scale=3.0, size=np.size(r)) for r in readings]
        noisy = instance.decode([r + p for r, p in zip(readings, perturbations)])
        worst = max(np.abs(p).max() for p in perturbations)
        assert np.abs(noisy - clean).max() <= worst + 1e-9


def test_gadget_problem_values():
    assert GadgetProblem("matching") == GadgetProblem.MATCHING
    assert set(GADGET_BUILDERS) == {
        GadgetProblem.MATCHING,
        GadgetProblem.KCORE,
        GadgetProblem.DEGHIST,
        GadgetProblem.TOPK,
    }
