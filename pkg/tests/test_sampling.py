import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nucv.errors import ConfigError
from nucv.sampling import (HypothesisPlanes, check_plane_count, entropy, intervals_from_distribution,
                           place_planes, plane_depths, sample_cost, stage_range, uniform_distribution)


def prefix_sum_planes(prev, dd):
    """Literal placement: inclusive prefix sums, minus the mean of the middle pair."""
    D = len(dd)
    S = np.cumsum(dd)
    return prev - (S[D // 2 - 1] + S[D // 2]) / 2 + S


def scalar_sample_cost(L, prev, P, R):
    raw = [np.exp(np.sqrt(((l - prev) / R) ** 2 * p)) for l, p in zip(L, P)]
    return np.array(raw) / sum(raw)


even_D = st.sampled_from([2, 4, 8, 16, 48])


def test_uniform_values():
    assert uniform_distribution(4).tolist() == [0.25] * 4
    u = uniform_distribution(48, (2, 3))
    assert u.shape == (48, 2, 3) and np.all(u == 1 / 48)


@pytest.mark.parametrize("D", [3, 0, 1, 2.5, -4])
def test_bad_plane_counts(D):
    with pytest.raises(ConfigError):
        check_plane_count(D)


def test_interval_examples():
    assert intervals_from_distribution(uniform_distribution(4), 8).tolist() == [2, 2, 2, 2]
    np.testing.assert_allclose(intervals_from_distribution([0.7, 0.1, 0.1, 0.1], 10), [7, 1, 1, 1])
    with pytest.raises(ConfigError):
        intervals_from_distribution(uniform_distribution(4), 0.0)


def test_stage_range():
    assert stage_range(0.25, 2.0, 10.0) == 2.0
    with pytest.raises(ConfigError):
        stage_range(1.5, 0, 1)


def test_worked_placement_example():
    np.testing.assert_allclose(plane_depths(10.0, np.array([1.0, 2, 3, 4])), [6.5, 8.5, 11.5, 15.5])


def test_uniform_symmetric_example():
    np.testing.assert_allclose(plane_depths(5.0, np.full(4, 2.0)), [2, 4, 6, 8])


@given(D=even_D, seed=st.integers(0, 2 ** 32 - 1))
def test_placement_matches_prefix_sum_oracle(D, seed):
    rng = np.random.default_rng(seed)
    dd = rng.uniform(0, 3, size=D)
    prev = rng.uniform(1, 100)
    np.testing.assert_allclose(plane_depths(prev, dd), prefix_sum_planes(prev, dd), rtol=1e-13, atol=1e-12)


@given(D=even_D, seed=st.integers(0, 2 ** 32 - 1))
def test_centering_identity_and_span(D, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(D), size=5).T
    R = rng.uniform(0.1, 10)
    prev = rng.uniform(1, 50, size=5)
    L = place_planes(prev, P, R).depths
    mid = (L[D // 2 - 1] + L[D // 2]) / 2
    assert np.all(np.abs(mid - prev) <= 1e-12 * prev)
    dd = P * R
    np.testing.assert_allclose(np.diff(L, axis=0), dd[1:], rtol=1e-9, atol=1e-12)
    span = L[-1] - L[0]
    np.testing.assert_allclose(span, R - dd[0], rtol=1e-9, atol=1e-12)
    assert np.all(span <= R + 1e-12)
    np.testing.assert_allclose(dd.sum(axis=0), R, rtol=1e-12)


@given(D=even_D, seed=st.integers(0, 2 ** 32 - 1))
def test_positive_intervals_increase(D, seed):
    dd = np.random.default_rng(seed).uniform(1e-6, 1, size=D)
    assert np.all(np.diff(plane_depths(3.0, dd)) > 0)


def test_uniform_reduction():
    L = place_planes(7.0, uniform_distribution(8), 4.0).depths
    np.testing.assert_allclose(np.diff(L), 0.5)
    np.testing.assert_allclose(L + L[::-1], 14.0)


def test_clamped_keeps_range():
    p = HypothesisPlanes(np.array([0.5, 2.0, 9.0]), 2.0, 0.5).clamped(1.0, 8.0)
    assert p.depths.tolist() == [1.0, 2.0, 8.0] and p.stage_range == 2.0 and p.count == 3


def test_sample_cost_zero_deviation_uniform():
    planes = HypothesisPlanes(np.full((4, 2, 2), 3.0), 1.0)
    P = np.random.default_rng(0).dirichlet(np.ones(4), size=(2, 2)).transpose(2, 0, 1)
    assert np.all(sample_cost(planes, np.full((2, 2), 3.0), P) == 0.25)


def test_sample_cost_one_hot_example():
    prev = 10.0
    L = np.array([7.0, 9.0, 11.0, 13.0])
    P = np.array([1.0, 0, 0, 0])
    got = sample_cost(HypothesisPlanes(L, 8.0), prev, P)
    np.testing.assert_allclose(got, scalar_sample_cost(L, prev, P, 8.0), rtol=1e-14)
    e = np.exp(3 / 8)
    np.testing.assert_allclose(got, [e / (e + 3), 1 / (e + 3), 1 / (e + 3), 1 / (e + 3)], rtol=1e-14)


@given(seed=st.integers(0, 2 ** 32 - 1), D=even_D)
def test_sample_cost_matches_scalar_and_normalizes(seed, D):
    rng = np.random.default_rng(seed)
    L = np.sort(rng.uniform(1, 9, size=D))
    prev = rng.uniform(1, 9)
    P = rng.dirichlet(np.ones(D))
    got = sample_cost(HypothesisPlanes(L, 8.0), prev, P)
    np.testing.assert_allclose(got, scalar_sample_cost(L, prev, P, 8.0), rtol=1e-12)
    assert abs(got.sum() - 1) < 1e-12 and np.all(got > 0)


def test_literal_sample_cost():
    L = np.array([0.0, 1.0])
    got = sample_cost(L, 0.0, np.array([0.0, 1.0]), normalize=False)
    np.testing.assert_allclose(got, [1 / (1 + np.e), np.e / (1 + np.e)])


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_doubling_deviations_lowers_entropy(seed):
    rng = np.random.default_rng(seed)
    D = 8
    prev = 5.0
    off = rng.uniform(-1, 1, size=D)
    P = rng.dirichlet(np.ones(D))
    a = sample_cost(HypothesisPlanes(prev + off, 2.0), prev, P)
    b = sample_cost(HypothesisPlanes(prev + 2 * off, 2.0), prev, P)
    assert entropy(b) < entropy(a)


@given(arrays(np.float64, 6, elements=st.floats(0, 1)))
def test_entropy_bounds(x):
    P = (x + 1e-3) / (x + 1e-3).sum()
    assert -1e-12 <= entropy(P) <= np.log(6) + 1e-12
