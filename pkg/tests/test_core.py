"""Forward filter contract: hand-computed cases, oracles, invariants."""

import math

import numpy as np
import pytest

from ghmmkl.core import (
    FilterState,
    filter_step,
    init_filter,
    log_likelihood,
    loglik_increments,
)
from ghmmkl.errors import AllZeroWeights
from ghmmkl.models.discrete import FixedTableHmm, Tilt3
from ghmmkl.montecarlo import path_sum_log_likelihood, stream

from conftest import random_table_hmm

LOG_HALF = math.log(0.5)


def test_init_filter_three_state_tilt_at_zero():
    # symbol 1 has emission probabilities (1, 0.5, 0) across the states
    state = init_filter(Tilt3(), [0.0], 0)
    np.testing.assert_allclose(
        state.weights, [2 / 3, 1 / 3, 0.0], atol=1e-15
    )
    assert abs(state.log_norm - LOG_HALF) < 1e-15
    assert state.t == 0


def test_init_filter_state_independent_emission_returns_initial_law():
    P = np.array([[0.7, 0.3], [0.4, 0.6]])
    E = np.array([[0.25, 0.75], [0.25, 0.75]])
    model = FixedTableHmm(P, E)
    pi = model.initial_law(np.zeros(0))
    for symbol in (0, 1):
        state = init_filter(model, np.zeros(0), symbol)
        np.testing.assert_allclose(state.weights, pi, atol=1e-15)


def test_init_filter_zero_support_observation_raises():
    model = FixedTableHmm(
        np.array([[0.5, 0.5], [0.5, 0.5]]),
        np.array([[1.0, 0.0], [1.0, 0.0]]),
    )
    with pytest.raises(AllZeroWeights):
        init_filter(model, np.zeros(0), 1)


def test_filter_step_three_state_hand_case():
    model = Tilt3()
    state = init_filter(model, [0.0], 0)
    after = filter_step(model, [0.0], state, 1)
    np.testing.assert_allclose(
        after.weights, [0.0, 1 / 3, 2 / 3], atol=1e-15
    )
    assert abs((after.log_norm - state.log_norm) - LOG_HALF) < 1e-14
    assert after.t == 1


def test_filter_step_identity_transition_constant_emission():
    P = np.eye(2)
    E = np.array([[0.3, 0.7], [0.3, 0.7]])
    model = FixedTableHmm(P, E, init=np.array([0.2, 0.8]))
    state = init_filter(model, np.zeros(0), 0)
    after = filter_step(model, np.zeros(0), state, 1)
    np.testing.assert_allclose(after.weights, state.weights, atol=1e-15)
    assert abs((after.log_norm - state.log_norm) - math.log(0.7)) < 1e-14


def test_two_observation_log_likelihood_value():
    # (symbol 1, symbol 2) at delta = 0: each carries probability 1/2
    ll = log_likelihood(Tilt3(), [0.0], np.array([0, 1]))
    assert abs(ll - 2 * LOG_HALF) < 1e-9
    assert abs(ll - (-1.386294)) < 1e-6


def test_single_observation_reduces_to_init_log_norm():
    model = Tilt3()
    for delta in (-0.3, 0.0, 0.2):
        for symbol in (0, 1):
            ll = log_likelihood(model, [delta], np.array([symbol]))
            assert ll == init_filter(model, [delta], symbol).log_norm


def test_matches_exhaustive_path_sum_two_states():
    rng = stream(11)
    P = rng.uniform(0.1, 1.0, size=(2, 2))
    P /= P.sum(axis=1, keepdims=True)
    E = rng.uniform(0.1, 1.0, size=(2, 2))
    E /= E.sum(axis=1, keepdims=True)
    model = FixedTableHmm(P, E)
    y = rng.integers(0, 2, size=9)
    ll = log_likelihood(model, np.zeros(0), y)
    oracle = path_sum_log_likelihood(model, np.zeros(0), y)
    assert abs(ll - oracle) < 1e-10


def test_step_increments_match_enumeration_oracle():
    model = Tilt3()
    theta = [0.13]
    rng = stream(12)
    for _ in range(5):
        y = rng.integers(0, 2, size=7)
        inc = loglik_increments(model, theta, y)
        for t in range(1, 7):
            gap = path_sum_log_likelihood(
                model, theta, y[: t + 1]
            ) - path_sum_log_likelihood(model, theta, y[:t])
            assert abs(inc[t] - gap) < 1e-10


def test_weights_stay_on_simplex(rng):
    for _ in range(10):
        model = random_table_hmm(rng)
        y = rng.integers(0, model.n_symbols, size=12)
        state = init_filter(model, np.zeros(0), int(y[0]))
        for t in range(1, 12):
            assert np.all(np.asarray(state.weights) >= 0)
            assert abs(np.asarray(state.weights).sum() - 1.0) < 1e-12
            state = filter_step(model, np.zeros(0), state, int(y[t]))


def test_prefix_increments_are_bitwise_stable(rng):
    # same arithmetic path: increments of a prefix equal the full run's head
    model = random_table_hmm(rng)
    y = rng.integers(0, model.n_symbols, size=10)
    full = loglik_increments(model, np.zeros(0), y)
    for n in range(1, 10):
        head = loglik_increments(model, np.zeros(0), y[:n])
        assert np.array_equal(head, full[:n])


def test_filter_invariant_to_positive_scaling_of_weights():
    model = Tilt3()
    theta = [0.07]
    state = init_filter(model, theta, 0)
    state = filter_step(model, theta, state, 1)
    for c in (1e-7, 3.0, 1e8):
        w = np.asarray(state.weights)
        scaled = (c * w) / (c * w).sum()
        mirror = FilterState(weights=scaled, log_norm=state.log_norm, t=state.t)
        a = filter_step(model, theta, state, 0)
        b = filter_step(model, theta, mirror, 0)
        np.testing.assert_allclose(b.weights, a.weights, atol=1e-14)
        assert abs(b.log_norm - a.log_norm) < 1e-14
