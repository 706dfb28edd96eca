"""Binary-unit TRBMs: factorized tables against the brute-force joint."""

import numpy as np
import pytest

from ghmmkl.errors import DimensionMismatch, SizeCap, StateSpaceTooLarge
from ghmmkl.models.trbm import (
    TrbmHmm,
    TrbmSpec,
    bit_patterns,
    joint_conditional_table,
    trbm_to_hmm,
)
from ghmmkl.montecarlo import simulate, stream


def _random_spec(rng, P=2, D=2, scale=0.6):
    return TrbmSpec(
        W=rng.normal(scale=scale, size=(D, P)),
        Wp=rng.normal(scale=scale, size=(P, P)),
        b_Y=rng.normal(scale=scale, size=D),
        b_H=rng.normal(scale=scale, size=P),
    )


def test_bit_patterns_little_endian():
    B = bit_patterns(3)
    assert B.shape == (8, 3)
    np.testing.assert_array_equal(B[0], [0, 0, 0])
    np.testing.assert_array_equal(B[1], [1, 0, 0])
    np.testing.assert_array_equal(B[6], [0, 1, 1])
    np.testing.assert_array_equal(B @ [1, 2, 4], np.arange(8))


def test_zero_weights_give_uniform_joint():
    spec = TrbmSpec(
        W=np.zeros((2, 2)), Wp=np.zeros((2, 2)), b_Y=np.zeros(2), b_H=np.zeros(2)
    )
    J = joint_conditional_table(spec)
    np.testing.assert_allclose(J, 1.0 / 16.0, atol=1e-14)
    model = trbm_to_hmm(spec)
    P, E = model.tables(model.default_theta)
    np.testing.assert_allclose(P, 0.25, atol=1e-14)
    np.testing.assert_allclose(E, 0.25, atol=1e-14)


def test_large_hidden_bias_saturates_hidden_unit():
    spec = TrbmSpec(
        W=np.zeros((1, 1)), Wp=np.zeros((1, 1)), b_Y=np.zeros(1), b_H=[30.0]
    )
    P, _ = trbm_to_hmm(spec).tables(spec.pack())
    # both transition rows put essentially all mass on the h = 1 state
    np.testing.assert_allclose(P[:, 1], 1.0, atol=1e-12)


def test_tables_are_stochastic(rng):
    for _ in range(5):
        spec = _random_spec(rng)
        P, E = trbm_to_hmm(spec).tables(spec.pack())
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(E.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(P > 0) and np.all(E > 0)


def test_factorization_matches_joint_table(rng):
    # P(y, h | h_prev) must equal T[h_prev, h] * E[h, y]
    for _ in range(5):
        spec = _random_spec(rng)
        model = trbm_to_hmm(spec)
        T, E = model.tables(spec.pack())
        J = joint_conditional_table(spec)
        S, A = model.n_states, model.n_symbols
        for hp in range(S):
            fac = T[hp][None, :] * E.T      # (A, S)
            np.testing.assert_allclose(J[hp], fac, atol=1e-12)


def test_marginal_transition_matches_joint(rng):
    spec = _random_spec(rng, P=3, D=2)
    model = trbm_to_hmm(spec)
    T, _ = model.tables(spec.pack())
    J = joint_conditional_table(spec)
    np.testing.assert_allclose(J.sum(axis=1), T, atol=1e-12)


def test_unit_caps():
    with pytest.raises(StateSpaceTooLarge):
        TrbmHmm(7, 2)
    with pytest.raises(StateSpaceTooLarge):
        TrbmHmm(2, 7)
    with pytest.raises(DimensionMismatch):
        TrbmHmm(0, 2)
    with pytest.raises(StateSpaceTooLarge):
        TrbmSpec(
            W=np.zeros((7, 2)), Wp=np.zeros((2, 2)), b_Y=np.zeros(7), b_H=np.zeros(2)
        )


def test_spec_shape_checks():
    with pytest.raises(DimensionMismatch):
        TrbmSpec(
            W=np.zeros((2, 3)), Wp=np.zeros((2, 2)), b_Y=np.zeros(2), b_H=np.zeros(2)
        )
    with pytest.raises(DimensionMismatch):
        TrbmSpec(
            W=np.zeros((2, 2)), Wp=np.zeros((3, 2)), b_Y=np.zeros(2), b_H=np.zeros(2)
        )


def test_third_order_tables_hit_size_cap():
    model = TrbmHmm(6, 6)
    with pytest.raises(SizeCap):
        model.table_derivs(np.zeros(model.param_dim), 3)


def test_pack_unpack_round_trip(rng):
    spec = _random_spec(rng, P=2, D=3)
    model = TrbmHmm(2, 3)
    W, Wp, b_Y, b_H = model.unpack(spec.pack())
    np.testing.assert_array_equal(W, spec.W)
    np.testing.assert_array_equal(Wp, spec.Wp)
    np.testing.assert_array_equal(b_Y, spec.b_Y)
    np.testing.assert_array_equal(b_H, spec.b_H)
    assert len(model.param_names) == model.param_dim == spec.pack().shape[0]


def test_table_derivs_match_finite_difference():
    rng = stream(31)
    model = TrbmHmm(2, 2)
    q = model.param_dim
    theta = rng.normal(scale=0.5, size=q)
    T, E, dT, dE, d2T, d2E, _, _ = model.table_derivs(theta, 2)
    h = 1e-5
    for i in range(q):
        ei = np.zeros(q)
        ei[i] = h
        Tp, Ep = model.tables(theta + ei)
        Tm, Em = model.tables(theta - ei)
        np.testing.assert_allclose(dT[i], (Tp - Tm) / (2 * h), atol=2e-8)
        np.testing.assert_allclose(dE[i], (Ep - Em) / (2 * h), atol=2e-8)
    # second derivatives against differenced first derivatives
    for i in range(0, q, 3):
        ei = np.zeros(q)
        ei[i] = h
        _, _, dTp, dEp, _, _, _, _ = model.table_derivs(theta + ei, 1)
        _, _, dTm, dEm, _, _, _, _ = model.table_derivs(theta - ei, 1)
        np.testing.assert_allclose(d2T[i], (dTp - dTm) / (2 * h), atol=1e-6)
        np.testing.assert_allclose(d2E[i], (dEp - dEm) / (2 * h), atol=1e-6)


def test_simulation_and_likelihood_run(rng):
    spec = _random_spec(rng)
    model = trbm_to_hmm(spec)
    traj = simulate(model, model.default_theta, 40, seed=1)
    assert traj.y.shape == (40,)
    assert set(np.unique(traj.y)) <= set(range(model.n_symbols))
    inc = model.loglik_increments(model.default_theta, traj.y)
    assert np.all(np.isfinite(inc))
    assert np.all(inc <= 0.0 + 1e-12)
