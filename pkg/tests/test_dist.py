from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochha.core import Affine
from stochha.dist import (DiscreteDistribution, DistSpec, Exponential, MinOf, ShiftConditioned,
                          StreamCursor, Uniform, adaptive_simpson, integrate, min_of,
                          prob_is_min, shift_condition, substream, sup_distance,
                          uniformity_deviation)
from stochha.errors import ExhaustedSupport, InvalidParameter, QuadratureFailure

uniforms = st.tuples(st.floats(0, 5), st.floats(0.1, 10)).map(lambda t: Uniform(t[0], t[0] + t[1]))
exps = st.floats(0.05, 5).map(Exponential)
laws = st.one_of(uniforms, exps)


# ---------------------------------------------------------------- families


def test_uniform_closed_forms():
    u = Uniform(2, 6)
    assert u.cdf(1) == 0 and u.cdf(4) == 0.5 and u.cdf(7) == 1
    assert u.pdf(3) == 0.25 and u.pdf(7) == 0
    assert u.quantile(0.25) == 3
    assert u.breakpoints() == (2, 6)


def test_exponential_closed_forms():
    x = Exponential(0.5)
    assert x.cdf(2) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert x.quantile(1 - math.exp(-1)) == pytest.approx(2, rel=1e-12)
    assert x.support == (0.0, math.inf)


@pytest.mark.parametrize("args", [(3, 3), (5, 1), (-1, 2), (0, math.inf)])
def test_uniform_rejects_bad_parameters(args):
    with pytest.raises(InvalidParameter):
        Uniform(*args)


@pytest.mark.parametrize("rate", [0, -1, math.inf, math.nan])
def test_exponential_rejects_bad_rates(rate):
    with pytest.raises(InvalidParameter):
        Exponential(rate)


@settings(max_examples=60)
@given(laws, st.floats(0.001, 0.999))
def test_quantile_inverts_cdf(d, p):
    assert d.cdf(d.quantile(p)) == pytest.approx(p, abs=1e-9)


@pytest.mark.parametrize("law,ref", [
    (Uniform(0, 10), stats.uniform(0, 10)),
    (Uniform(2.5, 3), stats.uniform(2.5, 0.5)),
    (Exponential(0.2), stats.expon(scale=5)),
    (Exponential(3), stats.expon(scale=1 / 3)),
    (ShiftConditioned(Uniform(0, 10), 4), stats.uniform(0, 6)),
])
def test_sampling_matches_law_by_ks(law, ref):
    rng = substream(11, 0)
    xs = np.array([law.sample(rng) for _ in range(20_000)])
    assert stats.kstest(xs, ref.cdf).pvalue > 0.001


def test_min_sampling_matches_min_law():
    m = min_of([Exponential(1), Uniform(0, 2)])
    rng = substream(5, 3)
    xs = np.array([m.sample(rng) for _ in range(20_000)])
    assert stats.kstest(xs, np.vectorize(m.cdf)).pvalue > 0.001


# ---------------------------------------------------------------- combinators


def test_exponential_is_memoryless():
    x = Exponential(0.7)
    assert shift_condition(x, 12.0) == x


def test_uniform_shift_condition_closed_form():
    assert shift_condition(Uniform(2, 10), 3) == Uniform(0, 7)
    assert shift_condition(Uniform(2, 10), 1) == Uniform(1, 9)


def test_shift_past_support_is_exhausted():
    with pytest.raises(ExhaustedSupport):
        shift_condition(Uniform(0, 1), 1)


@settings(max_examples=60)
@given(laws, st.floats(0, 3), st.floats(0, 3))
def test_residual_law_matches_definition(d, r, t):
    if d.sf(r) <= 1e-9:
        return
    res = shift_condition(d, r)
    expected = (d.sf(r) - d.sf(r + t)) / d.sf(r)
    assert res.cdf(t) == pytest.approx(expected, abs=1e-9)


def test_nested_shift_composes():
    base = ShiftConditioned(MinOf((Exponential(1), Uniform(0, 5))), 1.0)
    twice = shift_condition(base, 0.5)
    assert twice.cdf(0.7) == pytest.approx(
        shift_condition(MinOf((Exponential(1), Uniform(0, 5))), 1.5).cdf(0.7), abs=1e-12)


def test_min_of_survival_is_a_product():
    parts = (Exponential(1), Uniform(0, 3))
    m = min_of(parts)
    for t in (0.0, 0.5, 2.9, 4.0):
        assert m.sf(t) == pytest.approx(parts[0].sf(t) * parts[1].sf(t), abs=1e-15)
    assert min_of([Exponential(2)]) == Exponential(2)


def test_min_of_exponentials_is_exponential():
    m = min_of([Exponential(0.2), Exponential(0.2)])
    for t in (0.5, 3.0, 10.0):
        assert m.cdf(t) == pytest.approx(Exponential(0.4).cdf(t), abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(laws, min_size=1, max_size=3))
def test_win_probabilities_sum_to_one(dists):
    total = sum(prob_is_min(i, dists) for i in range(len(dists)))
    assert total == pytest.approx(1.0, abs=1e-7)


def test_exponential_race_is_rate_proportional():
    d = [Exponential(1), Exponential(3)]
    assert prob_is_min(0, d) == pytest.approx(0.25, abs=1e-9)
    assert prob_is_min(1, d) == pytest.approx(0.75, abs=1e-9)


def test_disjoint_uniforms_race_deterministically():
    d = [Uniform(0, 1), Uniform(2, 3)]
    assert prob_is_min(0, d) == pytest.approx(1.0, abs=1e-12)
    assert prob_is_min(1, d) == 0.0


def test_discrete_distribution():
    dd = DiscreteDistribution.from_weights({"a": 1, "b": 3})
    assert dd.probability("b") == 0.75 and dd.probability("c") == 0
    rng = substream(1, 1)
    draws = [dd.sample(rng) for _ in range(4000)]
    assert abs(draws.count("b") / 4000 - 0.75) < 0.03
    with pytest.raises(InvalidParameter):
        DiscreteDistribution.from_weights({"a": -1})


def test_dist_spec_resolves_affine_parameters():
    spec = DistSpec("uniform", (Affine((0.0,), 0.0), Affine((-0.5,), 0.5)))
    assert spec.resolve((0.0,)) == Uniform(0, 0.5)
    assert spec.resolve((0.5,)) == Uniform(0, 0.25)
    assert not spec.is_constant
    with pytest.raises(InvalidParameter):
        DistSpec("exp", ())
    with pytest.raises(InvalidParameter):
        DistSpec("gamma", (Affine.constant(1),))


# ---------------------------------------------------------------- quadrature


def test_adaptive_simpson_on_smooth_integrands():
    v, err = adaptive_simpson(math.sin, 0, math.pi, 1e-12)
    assert v == pytest.approx(2, abs=1e-10) and err < 1e-10
    v, _ = adaptive_simpson(lambda t: math.exp(-t), 0, 30, 1e-12)
    assert v == pytest.approx(1 - math.exp(-30), abs=1e-10)


def test_integrate_splits_at_breakpoints():
    step = lambda t: 1.0 if t < 1 / 3 else 2.0
    v, _ = integrate(step, 0, 1, [1 / 3], 1e-12)
    assert v == pytest.approx(1 / 3 + 4 / 3, abs=1e-12)


def test_integrate_reports_failure():
    with pytest.raises(QuadratureFailure):
        integrate(lambda t: 1 / t if t > 0 else math.inf, 0, 1)
    with pytest.raises(QuadratureFailure):
        integrate(lambda t: 1.0, 0, math.inf)


# ---------------------------------------------------------------- rng


def test_substreams_are_reproducible_and_distinct():
    a = substream(7, 3).random(5)
    assert np.array_equal(a, substream(7, 3).random(5))
    assert not np.array_equal(a, substream(7, 4).random(5))
    assert not np.array_equal(a, substream(8, 3).random(5))


@given(st.integers(0, 2**63), st.integers(0, 2**63))
@settings(max_examples=50)
def test_stream_cursor_matches_fresh_substream(seed, stream):
    cur = StreamCursor()
    cur.at(1, 2).random(3)
    assert np.array_equal(cur.at(seed, stream).random(4), substream(seed, stream).random(4))


# ---------------------------------------------------------------- uniformity


def test_uniform_pair_minimum_density_halves():
    m = min_of([Uniform(0, 10), Uniform(0, 10)])
    rep = uniformity_deviation(m, (0, 5))
    assert rep.ratio == pytest.approx(2.0, abs=1e-12)
    assert rep.argmax == 0 and rep.argmin == 5


def test_sup_distance_on_grid():
    grid = np.linspace(0, 10, 1001)
    gap, where = sup_distance(min_of([Uniform(0, 10)] * 2), Uniform(0, 10), grid)
    assert gap == pytest.approx(0.25, abs=1e-12) and where == pytest.approx(5)
