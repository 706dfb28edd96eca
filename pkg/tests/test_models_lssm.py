"""Linear state-space stack: filter exactness, VARMA forms, steady Fisher."""

import numpy as np
import pytest

from ghmmkl.errors import (
    DimensionMismatch,
    NonPsdCovariance,
    NonstationaryParameters,
)
from ghmmkl.models.lssm import (
    Ar1Family,
    FixedLssm,
    LssmModel,
    LssmParts,
    LssmSpec,
    RnnMeanFamily,
    VarmaFamily,
    kalman_filter,
    linear_rnn,
    lssm_fisher,
    steady_gain,
    varma_to_lssm,
)
from ghmmkl.montecarlo import long_run_average, simulate
from ghmmkl.sensitivity import fd_hessian, fd_score, hessian, score


class PaddedAr1(Ar1Family):
    """AR(1) plus one parameter the system matrices never read."""

    param_names = ["a", "unused"]

    def validate(self, theta):
        return theta

    def build(self, theta, order):
        parts = super().build(theta[:1], order)
        if order >= 1:
            parts.dPhi = np.concatenate([parts.dPhi, np.zeros((1, 1, 1))])
            parts.dF = np.concatenate([parts.dF, np.zeros((1, 1, 1))])
            parts.dmu = None
            parts.d2Phi = parts.d2F = parts.d2mu = None
        return parts.filled(2, order)


def test_spec_shape_validation():
    with pytest.raises(DimensionMismatch):
        LssmSpec(np.ones((2, 2)), np.ones((1, 1)), np.ones((1, 2)), np.ones((1, 1)))
    with pytest.raises(DimensionMismatch):
        LssmSpec(np.eye(2) * 0.5, np.ones((2, 1)), np.ones((1, 1)), np.ones((1, 1)))


def test_spec_rejects_asymmetric_sigma():
    with pytest.raises(NonPsdCovariance):
        LssmSpec(
            np.eye(2) * 0.1,
            np.eye(2),
            np.eye(2),
            np.array([[1.0, 0.3], [0.2, 1.0]]),
        )


def test_stability_enforced():
    with pytest.raises(NonstationaryParameters):
        LssmModel(Ar1Family()).validate_theta([1.0])
    with pytest.raises(NonstationaryParameters):
        LssmModel(VarmaFamily(1, 1, 0)).loglik_increments(
            np.array([-1.2]), np.zeros(5)
        )


def test_varma_companion_ar1():
    # Y_n + alpha_1 Y_{n-1} = eps_n with alpha_1 = -a gives Phi = F = a
    spec = varma_to_lssm(-0.5, [])
    np.testing.assert_allclose(spec.Phi, [[0.5]])
    np.testing.assert_allclose(spec.F, [[0.5]])
    np.testing.assert_allclose(spec.H, [[1.0]])
    np.testing.assert_allclose(spec.Sigma, [[1.0]])


def test_varma_dimensions_bivariate():
    fam = VarmaFamily(2, 1, 1)
    assert fam.param_dim == 8
    assert len(fam.param_names) == 8
    a1 = np.array([[-0.5, 0.2], [0.1, -0.3]])
    b1 = np.array([[0.3, 0.0], [-0.1, 0.2]])
    theta = np.concatenate([a1.ravel(), b1.ravel()])
    spec = fam.build(theta, 0).spec
    assert spec.state_dim == 2 and spec.obs_dim == 2
    np.testing.assert_allclose(spec.Phi, -a1)
    np.testing.assert_allclose(spec.F, b1 - a1)
    np.testing.assert_allclose(spec.H, np.eye(2))


def test_ar1_innovations_exact_after_first_step():
    model = LssmModel(Ar1Family())
    y = simulate(model, [0.5], 30, seed=1).y
    res = kalman_filter(Ar1Family().build(np.array([0.5]), 0).spec, y)
    # step 1 carries the stationary state variance a^2 / (1 - a^2) = 1/3
    assert abs(res.innovation_covs[0, 0, 0] - 1 / 3) < 1e-12
    # from step 2 the innovation is exactly y_t - a y_{t-1} with unit variance
    np.testing.assert_array_equal(res.innovations[1:, 0], y[1:] - 0.5 * y[:-1])
    np.testing.assert_allclose(res.innovation_covs[1:, 0, 0], 1.0, atol=1e-14)
    np.testing.assert_allclose(res.gains[:, 0, 0], 0.5, atol=1e-14)
    assert res.steady_index == 2


def test_zero_observations_loglik_is_pure_normalizer():
    fam = VarmaFamily(2, 1, 1)
    a1 = np.array([[-0.4, 0.1], [0.0, -0.3]])
    b1 = np.array([[0.2, 0.0], [0.0, 0.1]])
    theta = np.concatenate([a1.ravel(), b1.ravel()])
    res = kalman_filter(fam.build(theta, 0).spec, np.zeros((6, 2)))
    np.testing.assert_array_equal(res.innovations, 0.0)
    for t in range(6):
        sign, logdet = np.linalg.slogdet(res.innovation_covs[t])
        assert sign == 1.0
        expect = -0.5 * (2 * np.log(2 * np.pi) + logdet)
        assert abs(res.increments[t] - expect) < 1e-12


def test_innovation_covariances_settle_and_match_steady_gain():
    fam = VarmaFamily(2, 1, 1)
    a1 = np.array([[-0.5, 0.2], [0.1, -0.3]])
    b1 = np.array([[0.3, 0.0], [-0.1, 0.2]])
    theta = np.concatenate([a1.ravel(), b1.ravel()])
    model = LssmModel(fam)
    y = simulate(model, theta, 200, seed=2).y
    res = kalman_filter(fam.build(theta, 0).spec, y)
    assert np.abs(res.innovation_covs[-1] - res.innovation_covs[-2]).max() < 1e-10
    st, _ = steady_gain(fam.build(theta, 1), 1)
    assert np.abs(st["S"] - res.innovation_covs[-1]).max() < 1e-9
    mins = min(np.linalg.eigvalsh(S).min() for S in res.innovation_covs)
    assert mins >= -1e-10


def test_stepwise_filter_matches_fused_increments():
    fam = VarmaFamily(2, 1, 1)
    a1 = np.array([[-0.5, 0.2], [0.1, -0.3]])
    b1 = np.array([[0.3, 0.0], [-0.1, 0.2]])
    theta = np.concatenate([a1.ravel(), b1.ravel()])
    model = LssmModel(fam)
    y = simulate(model, theta, 60, seed=2).y
    inc = model.loglik_increments(theta, y)
    state = model.init_filter(theta, y[0])
    assert abs(state.log_norm - inc[0]) < 1e-12
    for t in range(1, 60):
        state = model.filter_step(theta, state, y[t])
    assert abs(state.log_norm - inc.sum()) < 1e-10


def test_rnn_mean_matches_its_arma_realization():
    # X_n = delta + alpha Y_{n-1} + beta X_{n-1} observed through unit noise
    # equals an ARMA(1, 1) on the centered series
    model, theta = linear_rnn(0.4, 0.3, 0.2, variant="mean")
    y = simulate(model, theta, 150, seed=5).y
    mu = 0.4 / (1 - 0.3 - 0.2)
    varma = LssmModel(VarmaFamily(1, 1, 1))
    iv = varma.loglik_increments(np.array([-0.5, -0.2]), y - mu)
    ir = model.loglik_increments(theta, y)
    np.testing.assert_allclose(ir, iv, atol=1e-12)


def test_rnn_mean_rejects_unstable_recurrence():
    with pytest.raises(NonstationaryParameters):
        LssmModel(RnnMeanFamily()).validate_theta([0.1, 0.6, 0.4])


def test_linear_rnn_variance_variant_is_garch():
    model, theta = linear_rnn(0.1, 0.2, 0.7, variant="variance")
    assert model.family == "garch11"
    np.testing.assert_allclose(theta, [0.1, 0.2, 0.7])
    with pytest.raises(ValueError):
        linear_rnn(0.1, 0.2, 0.3, variant="median")


def test_rnn_mean_score_and_hessian_match_finite_difference():
    model = LssmModel(RnnMeanFamily())
    theta = np.array([0.4, 0.3, 0.2])
    y = simulate(model, theta, 150, seed=5).y
    g = score(model, theta, y)
    fd = fd_score(model, theta, y, h=1e-5, richardson=True)
    np.testing.assert_allclose(g, fd, atol=1e-7 * max(1.0, np.abs(fd).max()))
    H = hessian(model, theta, y)
    fdH = fd_hessian(model, theta, y, h=1e-4)
    scale = max(1.0, np.abs(fdH).max())
    np.testing.assert_allclose(H, fdH, atol=1e-6 * scale)


def test_varma_score_matches_finite_difference():
    fam = VarmaFamily(1, 1, 1)
    model = LssmModel(fam)
    theta = np.array([-0.6, 0.25])
    y = simulate(model, theta, 120, seed=8).y
    g = score(model, theta, y)
    fd = fd_score(model, theta, y, h=1e-5, richardson=True)
    np.testing.assert_allclose(g, fd, atol=1e-7 * max(1.0, np.abs(fd).max()))


def test_multivariate_simulation_shapes():
    fam = VarmaFamily(2, 1, 0)
    theta = np.array([[-0.4, 0.1], [0.0, -0.2]]).ravel()
    traj = simulate(LssmModel(fam), theta, 25, seed=0)
    assert traj.y.shape == (25, 2)
    assert traj.x.shape == (25, 2)


def test_simulated_observation_variance_ar1():
    # stationary Var(Y) = 1 / (1 - a^2) = 4/3 at a = 0.5
    traj = simulate(LssmModel(Ar1Family()), [0.5], 50_000, seed=9)
    mean, se = long_run_average(traj.y**2)
    assert abs(mean - 4 / 3) < 3 * se


def test_steady_fisher_ar1_matches_asymptotic_value():
    model = LssmModel(Ar1Family())
    est = lssm_fisher(model, np.array([0.5]), 20_000, 3)
    assert est.method == "lssm-steady"
    assert abs(est.matrix[0, 0] - 4 / 3) < 3 * est.se_proxy[0, 0]
    np.testing.assert_array_equal(est.matrix, est.matrix.T)


def test_dead_parameter_gives_zero_information_row():
    model = LssmModel(PaddedAr1())
    theta = np.array([0.5, 7.0])
    est = lssm_fisher(model, theta, 2_000, 1)
    np.testing.assert_array_equal(est.matrix[1, :], 0.0)
    np.testing.assert_array_equal(est.matrix[:, 1], 0.0)
    assert abs(est.matrix[0, 0] - 4 / 3) < 0.15
    y = simulate(model, theta, 50, seed=4).y
    res = model.sensitivity_pass(theta, y, 2)
    assert res.score[1] == 0.0
    np.testing.assert_array_equal(res.hessian[1, :], 0.0)


def test_fixed_lssm_has_no_parameters():
    spec = varma_to_lssm(-0.5, [])
    fam = FixedLssm(spec, mu=[0.3])
    model = LssmModel(fam)
    assert model.param_dim == 0
    y = simulate(model, np.zeros(0), 40, seed=6).y
    inc = model.loglik_increments(np.zeros(0), y)
    assert inc.shape == (40,)
    assert np.all(np.isfinite(inc))
