"""
Tests for the marginals-solving families and the item-level planner.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dpstream.core import HarnessError, ParameterError, PrivacyBudget, RandomSource
from dpstream.graph_mechanisms import GraphStatistic, LadderMechanism
from dpstream.graphs import DynamicGraph, exhaustive_mincut, exhaustive_st_mincut
from harness.instances import MarginalsInstance
from harness.msf import (
    MsfKind,
    MsfProblem,
    base_edge_count,
    build_family,
    build_msf_stream,
    msf_horizon,
    plan_item_level,
    vertex_count,
)
from harness.neighbors import neighbor_diff_check
from harness.oracles import ExactOracle
from harness.reductions import private_mechanism, run_inc_reduction, run_msf_reduction

PROBLEMS = [
    MsfProblem(MsfKind.ST_MINCUT),
    MsfProblem(MsfKind.MINCUT),
    MsfProblem(MsfKind.DEG_AT_LEAST, tau=1),
    MsfProblem(MsfKind.DEG_AT_LEAST, tau=2),
    MsfProblem(MsfKind.DEG_AT_LEAST, tau=3),
    MsfProblem(MsfKind.KCORE),
    MsfProblem(MsfKind.EDGE_COUNT),
    MsfProblem(MsfKind.ZERO_BASED, gadget="matching"),
    MsfProblem(MsfKind.ZERO_BASED, gadget="triangle"),
]


def _fits(problem, n):
    return problem.kind != MsfKind.DEG_AT_LEAST or 2 * ((problem.tau - 1) // 2) <= n - 1


@pytest.mark.parametrize("problem", PROBLEMS, ids=lambda p: p.name)
def test_family_statistic_is_weight_times_subset_size(problem):
    generator = np.random.default_rng(0)
    for n in range(2, 7):
        if not _fits(problem, n):
            continue
        family = build_family(problem, n)
        assert family.vertices == vertex_count(problem, n)
        assert len(family.base_edges) == base_edge_count(problem, n)
        for _ in range(10):
            chosen = generator.integers(0, 2, size=n)
            edges = family.base_edges + [e for e, c in zip(family.special_edges, chosen) if c]
            graph = DynamicGraph(family.vertices, edges)
            assert family.statistic(graph) == family.weight * chosen.sum()


@pytest.mark.parametrize("problem", PROBLEMS, ids=lambda p: p.name)
def test_exact_oracle_recovers_marginals(problem):
    for n in range(2, 7):
        if not _fits(problem, n):
            continue
        for d in range(1, 5):
            marginals = MarginalsInstance.random(n, d, seed=10 * n + d)
            instance = build_msf_stream(problem, marginals)
            assert len(instance.stream) == msf_horizon(problem, n, d)
            result = run_msf_reduction(instance, ExactOracle.for_instance(instance))
            assert np.allclose(result.decoded, marginals.normalized_column_sums())


def test_st_mincut_example():
    family = build_family(MsfProblem(MsfKind.ST_MINCUT), 2)
    assert family.base_edges == [(1, 2), (1, 3)]
    assert family.special_edges == [(0, 2), (0, 3)]
    graph = DynamicGraph(4, family.base_edges + family.special_edges[:1])
    assert family.statistic(graph) == exhaustive_st_mincut(graph) == 1


def test_mincut_family_against_exhaustive_oracle():
    family = build_family(MsfProblem(MsfKind.MINCUT), 4)
    graph = DynamicGraph(5, family.base_edges + family.special_edges[1:])
    assert family.statistic(graph) == exhaustive_mincut(graph) == 3


def test_all_zero_matrix_reads_zero():
    marginals = MarginalsInstance(np.zeros((3, 2), dtype=int))
    instance = build_msf_stream(MsfProblem(MsfKind.ST_MINCUT), marginals)
    assert all(update.is_noop for update in instance.stream.updates[3:])
    result = run_msf_reduction(instance, ExactOracle.for_instance(instance))
    assert result.decoded.tolist() == [0.0, 0.0]


def test_neighbor_touches_one_special_edge():
    problem = MsfProblem(MsfKind.ST_MINCUT)
    marginals = MarginalsInstance.random(5, 3, seed=2)
    report = neighbor_diff_check(lambda m: build_msf_stream(problem, m), marginals, seed=4)
    assert report.touched == {(0, report.flipped + 2)}
    assert report.positions


def test_ladder_rejects_deletions():
    marginals = MarginalsInstance(np.ones((2, 1), dtype=int))
    instance = build_msf_stream(MsfProblem(MsfKind.EDGE_COUNT), marginals)
    ladder = LadderMechanism(
        GraphStatistic.MATCHING,
        instance.stream.universe,
        instance.stream.horizon,
        PrivacyBudget.create(epsilon=1.0),
        RandomSource(0),
    )
    with pytest.raises(HarnessError) as excinfo:
        run_inc_reduction(instance, ladder)
    assert excinfo.value.step == 3
    with pytest.raises(ParameterError):
        private_mechanism(instance, PrivacyBudget.create(epsilon=1.0), RandomSource(0))


def test_problem_parsing():
    assert MsfProblem.parse("deg_at_least:3") == MsfProblem(MsfKind.DEG_AT_LEAST, tau=3)
    assert MsfProblem.parse("zero_based:triangle").gadget == "triangle"
    assert MsfProblem.parse("kcore").name == "kcore"
    with pytest.raises(ParameterError):
        MsfProblem.parse("diameter")
    with pytest.raises(ParameterError):
        MsfProblem.parse("mincut:2")
    with pytest.raises(ParameterError):
        build_family(MsfProblem(MsfKind.DEG_AT_LEAST, tau=5), 3)


def test_plan_item_level_pure():
    n, d = plan_item_level(10000, 1.0)
    assert d == 100
    assert msf_horizon(MsfProblem(MsfKind.EDGE_COUNT), n, d) <= 10000
    assert msf_horizon(MsfProblem(MsfKind.EDGE_COUNT), n + 1, d) > 10000
    assert n == 50


def test_plan_item_level_approx_and_vertex_cap():
    n, d = plan_item_level(2000, 1.0, delta=1e-6)
    assert d == 158
    assert n == 6
    capped, _ = plan_item_level(2000, 1.0, delta=1e-6, max_vertices=4)
    assert capped == 4
    assert vertex_count(MsfProblem(MsfKind.EDGE_COUNT), capped) <= 4
    with pytest.raises(ParameterError):
        plan_item_level(1, 0.01)
