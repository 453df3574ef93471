"""Acceptance criteria 1-8, each at its stated tolerance and time budget.

``pytest tests/test_acceptance.py`` ends with one PASS/FAIL line per criterion.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles as O
from conftest import FIXTURE_NAMES, fixture_path, load_fixture
from stochha.composed import first_jump_frequencies
from stochha.core import TimeIntervalSet, edges_plus, enabled_edges, jump_time_set, t_max, time_set
from stochha.dist import Exponential, Uniform, integrate, min_of, substream
from stochha.dsl import build, parse, serialize
from stochha.equiv import cdf_gap, check_pr_equivalence, counterexample_witness
from stochha.measure import (Trace, delay_distribution, mc_estimate, prefix_counts,
                             trace_prob_composed, trace_prob_decomposed_quad, zeno_probe)
from stochha.parallel import run_trajectories
from stochha.translate import kernel_delay, translate
from test_core import flow_semigroup_holds
from test_decomposed import race_invariants_hold
from test_parallel import csv_by_workers

pytestmark = pytest.mark.acceptance


class Budget:
    """Wall-clock limit for one criterion."""

    def __init__(self, seconds: float):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s > {self.seconds}s"


@pytest.mark.criterion(1, "characteristic sets of the fig1 model")
def test_criterion_1_characteristic_sets():
    with Budget(1.0):
        H = load_fixture("fig1").automaton
        s = H.init
        assert jump_time_set(H, s, H.edge("e1")) == TimeIntervalSet.closed(3, 9)
        assert jump_time_set(H, s, H.edge("e2")) == TimeIntervalSet.closed(0, 8)
        assert jump_time_set(H, s, H.edge("e3")) == TimeIntervalSet()
        assert time_set(H, s) == TimeIntervalSet.closed(0, 9)
        assert t_max(H, s) == 9
        assert {e.id for e in enabled_edges(H, s)} == {"e2"}
        assert {e.id for e in edges_plus(H, "q0")} == {"e1", "e2"}


@pytest.mark.criterion(2, "composed first-jump law of fig2b")
def test_criterion_2_composed_first_jump_law():
    with Budget(30.0):
        C = load_fixture("fig2b")
        head = C.automaton.init
        expected = {"e1": O.FIG2B_E1, "e2": O.FIG2B_E2, "eps_l0": O.FIG2B_EPS}
        assert (O.FIG2B_E1, O.FIG2B_E2, O.FIG2B_EPS) == pytest.approx((0.51, 0.19, 0.30),
                                                                      abs=1e-12)
        for e, p in expected.items():
            assert trace_prob_composed(C, Trace(head, (e,))).value == pytest.approx(p, abs=1e-6)
        n = 100_000
        freq = first_jump_frequencies(run_trajectories(C, 7, n, max_jumps=1, workers=4))
        for e, p in expected.items():
            assert abs(freq[e] - p) <= 3 * math.sqrt(p * (1 - p) / n), (e, freq[e])


@pytest.mark.criterion(3, "decomposed first-jump law of fig2c")
def test_criterion_3_decomposed_first_jump_law():
    with Budget(60.0):
        D = load_fixture("fig2c")
        head = D.automaton.init
        expected = {"e1": 0.5 * math.exp(-1.6), "e2": 0.5 * (math.exp(-1.2) - math.exp(-2.8))}
        assert expected["e1"] == pytest.approx(0.1009, abs=1e-4)
        assert expected["e2"] == pytest.approx(0.1202, abs=1e-4)
        n = 100_000
        counts = prefix_counts(D, head, 1, n, 19)
        for e, p in expected.items():
            est = mc_estimate(counts.get((e,), 0), n, 0.99)
            assert est.lo <= p <= est.hi, (e, est)
            q = trace_prob_decomposed_quad(D, Trace(head, (e,)))
            assert q.value == pytest.approx(p, abs=1e-6)


@pytest.mark.criterion(4, "minimum of two U(0,10) variables is not uniform")
def test_criterion_4_uniform_pair_minimum():
    m = min_of([Uniform(0, 10), Uniform(0, 10)])
    h = 1e-3
    # mean density over a short window at each point, by quadrature
    at0 = integrate(m.pdf, 0.0, h, (), 1e-14)[0] / h
    at5 = integrate(m.pdf, 5.0 - h / 2, 5.0 + h / 2, (), 1e-14)[0] / h
    assert at0 / at5 == pytest.approx(2.0, abs=0.02)
    n = 100_000
    rng = substream(404, 0)
    u = Uniform(0, 10)
    xs = np.array([min(u.sample(rng), u.sample(rng)) for _ in range(n)])
    res = stats.kstest(xs, np.vectorize(m.cdf))
    assert res.pvalue >= 0.01, res


@pytest.mark.criterion(5, "translated fig2c is Pr-equivalent at depth 2")
def test_criterion_5_translation_is_equivalent():
    with Budget(120.0):
        D = load_fixture("fig2c")
        T = translate(D)
        rep = check_pr_equivalence(D, T.composed, T.edge_map, depth=2, n=100_000,
                                   alpha=0.01, seed=5, cdf_tol=1e-12)
        assert rep.passed, str(rep)
        assert all(c.passed and not c.only_a and not c.only_b for c in rep.trace_sets)
        assert rep.probabilities and all(p.passed for p in rep.probabilities)
        assert all(c.statistic <= 1e-12 for c in rep.delay_cdfs)
        target = Exponential(0.4)
        assert cdf_gap(delay_distribution(D, D.automaton.init), target)[0] <= 1e-12
        assert cdf_gap(kernel_delay(T.composed, T.composed.automaton.init), target)[0] <= 1e-12


@pytest.mark.criterion(6, "witness of a non-uniform race minimum")
def test_criterion_6_counterexample_witness():
    rep = counterexample_witness(Uniform(0, 10), Uniform(0, 10), Uniform(0, 10))
    assert rep.valid
    assert rep.ks_distance == pytest.approx(0.25, abs=0.01)
    assert rep.ks_at == pytest.approx(5.0, abs=1e-3)


@pytest.mark.criterion(7, "repeated resampling probabilities of fig2b")
def test_criterion_7_zeno_probe():
    rep = zeno_probe(load_fixture("fig2b"), "l0", 4)
    p = rep.probabilities
    assert p[0] == pytest.approx(0.300, abs=1e-6)
    assert p[1] == pytest.approx(0.045, abs=1e-6)
    assert len(p) == 4 and all(a > b for a, b in zip(p, p[1:]))
    assert rep.decreasing


@pytest.mark.criterion(8, "property suites")
def test_criterion_8_flow_semigroup():
    assert flow_semigroup_holds(10_000) == 10_000


@pytest.mark.criterion(8, "property suites")
@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_criterion_8_depth1_partition(name):
    model = load_fixture(name)
    head = model.automaton.init
    ids = [e.id for e in model.automaton.edges_from(head.location)]
    if name == "fig2c":
        n = 10_000
        counts = prefix_counts(model, head, 1, n, 8)
        assert sum(counts.values()) == n
        total = sum(trace_prob_decomposed_quad(model, Trace(head, (i,))).value for i in ids)
    else:
        total = sum(trace_prob_composed(model, Trace(head, (i,))).value for i in ids)
    assert total == pytest.approx(1.0, abs=1e-6)


@pytest.mark.criterion(8, "property suites")
def test_criterion_8_race_invariants():
    assert race_invariants_hold(load_fixture("fig2c"), 10_000, 4, seed=81) == 40_000


@pytest.mark.criterion(8, "property suites")
@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_criterion_8_dsl_round_trip(name):
    doc = parse(fixture_path(name).read_text())
    assert parse(serialize(doc)) == doc
    assert build(parse(serialize(doc))) == build(doc)


@pytest.mark.criterion(8, "property suites")
@pytest.mark.parametrize("name", ["fig2b", "fig2c"])
def test_criterion_8_worker_count_determinism(name):
    out = csv_by_workers(load_fixture(name), 2024, 2_000, 5)
    assert out[1] == out[4] == out[16]
