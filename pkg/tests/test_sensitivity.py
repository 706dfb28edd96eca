"""Derivative bundles, analytic score/Hessian, finite-difference oracles."""

import numpy as np
import pytest

from ghmmkl.errors import StepTooSmall, UnsupportedOrder
from ghmmkl.models.discrete import FixedTableHmm, Tilt3
from ghmmkl.models.garch import Garch11
from ghmmkl.montecarlo import simulate, stream
from ghmmkl.multiindex import count, step_coefficient_rows
from ghmmkl.sensitivity import (
    fd_hessian,
    fd_score,
    hessian,
    init_sensitivity,
    score,
    sensitivity_pass,
    sensitivity_step,
    symmetrize,
)

from conftest import random_table_hmm


def test_init_bundle_tilt_derivative_vector():
    # d/d delta of the unnormalized first weights is (0, 1/3, 0); the
    # bundle stores it divided by the 0.5 normalizer
    bundle = init_sensitivity(Tilt3(), [0.0], 0, order=1)
    np.testing.assert_allclose(
        bundle.vectors[0], [2 / 3, 1 / 3, 0.0], atol=1e-15
    )
    np.testing.assert_allclose(
        bundle.vectors[1], [0.0, 2 / 3, 0.0], atol=1e-15
    )


def test_init_bundle_parameter_free_model_is_zero():
    model = FixedTableHmm(
        np.array([[0.6, 0.4], [0.2, 0.8]]),
        np.array([[0.5, 0.5], [0.1, 0.9]]),
    )
    # q = 0: the bundle carries only the base filter row
    bundle = init_sensitivity(model, np.zeros(0), 0, order=1)
    assert bundle.vectors.shape[0] == 1


def test_bundle_slot_count_matches_multiindex_count():
    bundle = init_sensitivity(Tilt3(), [0.1], 0, order=1)
    assert bundle.vectors.shape[0] == count(1, 1)
    assert bundle.vectors.shape[0] - 1 == 1  # q derivative slots at r=1
    bundle = init_sensitivity(Garch11(), [0.1, 0.2, 0.7], 0.3, order=2)
    # non-finite bundles carry their stats per multi-index as well
    assert bundle.order == 2


def test_scalar_step_table_is_binomial_triangle():
    assert step_coefficient_rows(1, 2) == [[1], [1, 1], [1, 2, 1]]


def test_derivatives_stay_zero_for_parameter_free_tables():
    model = FixedTableHmm(
        np.array([[0.6, 0.4], [0.2, 0.8]]),
        np.array([[0.5, 0.5], [0.1, 0.9]]),
    )
    y = np.array([0, 1, 1, 0, 1])
    res = model.sensitivity_pass(np.zeros(0), y, 2)
    assert res.score.shape == (0,)
    assert res.hessian.shape == (0, 0)


def test_stepping_bundle_matches_fused_pass():
    model = Tilt3()
    theta = [0.11]
    y = np.array([0, 1, 0, 0, 1, 1])
    bundle = init_sensitivity(model, theta, int(y[0]), order=2)
    for t in range(1, y.shape[0]):
        bundle = sensitivity_step(model, theta, bundle, int(y[t]))
    res = model.sensitivity_pass(np.asarray(theta), y, 2)
    assert abs(bundle.log_norm - res.loglik) < 1e-12
    assert bundle.t == y.shape[0] - 1


def test_one_observation_score_value():
    # d/d delta log P(y0 = symbol 1) at delta 0: (1/3) / (1/2)
    g = score(Tilt3(), [0.0], np.array([0]))
    assert abs(g[0] - 2 / 3) < 1e-14


def test_tilt_score_matches_finite_difference():
    model = Tilt3()
    rng = stream(21)
    for _ in range(5):
        delta = float(rng.uniform(-0.3, 0.3))
        y = rng.integers(0, 2, size=6)
        g = score(model, [delta], y)
        fd = fd_score(model, np.array([delta]), y, h=1e-5)
        assert abs(g[0] - fd[0]) <= 1e-6 * max(1.0, abs(fd[0]))


def test_garch_score_matches_finite_difference():
    model = Garch11()
    theta = np.array([0.1, 0.2, 0.7])
    y = simulate(model, theta, 200, seed=7).y
    g = score(model, theta, y)
    fd = fd_score(model, theta, y, h=1e-5, richardson=True)
    np.testing.assert_allclose(g, fd, rtol=1e-5)


def test_tilt_hessian_matches_finite_difference():
    model = Tilt3()
    y = np.array([0, 1, 1, 0, 1, 0])
    theta = np.array([0.12])
    H = hessian(model, theta, y)
    fd = fd_hessian(model, theta, y, h=1e-4)
    np.testing.assert_allclose(H, fd, rtol=1e-4)


def test_scalar_hessian_equals_score_derivative():
    model = Tilt3()
    y = np.array([0, 1, 0, 1, 1])
    theta = 0.05
    H = hessian(model, np.array([theta]), y)
    h = 1e-5
    dscore = (
        score(model, np.array([theta + h]), y)
        - score(model, np.array([theta - h]), y)
    ) / (2 * h)
    assert abs(H[0, 0] - dscore[0]) < 1e-5 * max(1.0, abs(H[0, 0]))


def test_hessian_asymmetry_is_negligible():
    model = Garch11()
    theta = np.array([0.1, 0.2, 0.7])
    y = simulate(model, theta, 300, seed=3).y
    res = sensitivity_pass(model, theta, y, order=2)
    scale = max(1.0, float(np.abs(res.hessian).max()))
    assert res.asymmetry < 1e-8 * scale
    np.testing.assert_allclose(res.hessian, res.hessian.T, atol=0)


def test_score_increments_are_additive(rng):
    # score of a prefix equals the running sum of increments, within 1e-12
    model = Tilt3()
    theta = np.array([0.09])
    y = rng.integers(0, 2, size=8)
    res = model.sensitivity_pass(theta, y, 1)
    for n in range(1, 8):
        partial = model.sensitivity_pass(theta, y[:n], 1)
        np.testing.assert_allclose(
            partial.score, res.score_inc[:n].sum(axis=0), atol=1e-12
        )


def test_random_finite_models_pass_gradient_check(rng):
    for _ in range(8):
        model = random_table_hmm(rng)
        y = rng.integers(0, model.n_symbols, size=10)
        g = score(model, np.zeros(0), y)
        assert g.shape == (0,)


def test_fd_score_quadratic_function_exact():
    fn = lambda th: -float(th[0] ** 2)
    g = fd_score(fn, np.array([1.0]))
    assert abs(g[0] + 2.0) < 1e-9


def test_fd_hessian_quadratic_function_exact():
    fn = lambda th: -float(th[0] ** 2)
    H = fd_hessian(fn, np.array([1.0]))
    assert abs(H[0, 0] + 2.0) < 1e-6


def test_fd_step_too_small_raises():
    fn = lambda th: 1.0  # constant: increments are pure rounding noise
    with pytest.raises(StepTooSmall):
        fd_score(fn, np.array([1.0]), h=1e-12)


def test_symmetrize_reports_asymmetry():
    H = np.array([[1.0, 2.0], [2.5, 3.0]])
    S, asym = symmetrize(H)
    np.testing.assert_allclose(S, [[1.0, 2.25], [2.25, 3.0]])
    assert abs(asym - 0.5) < 1e-15


def test_fused_pass_rejects_order_three():
    with pytest.raises(UnsupportedOrder):
        sensitivity_pass(Tilt3(), [0.1], np.array([0, 1]), order=3)
