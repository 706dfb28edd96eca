"""Fisher and KL estimators, exact small-case KL, bound reporting, sweeps."""

import math

import numpy as np
import pytest

from ghmmkl.errors import SingularInformation, TooLarge
from ghmmkl.info import (
    crlb_report,
    fisher_hessian_estimate,
    fisher_score_estimate,
    kl_additivity_check,
    kl_estimate,
    kl_exact_small,
    kl_sweep,
    quadratic_check,
)
from ghmmkl.models.base import FiniteGhmm
from ghmmkl.models.discrete import FixedTableHmm, Tilt3
from ghmmkl.models.garch import Garch11


class SupportSwitch(FiniteGhmm):
    """One-state family whose support collapses for negative parameters."""

    family = "switch"

    @property
    def param_dim(self):
        return 1

    @property
    def param_names(self):
        return ["s"]

    @property
    def n_states(self):
        return 1

    @property
    def n_symbols(self):
        return 2

    def tables(self, theta):
        P = np.array([[1.0]])
        if theta[0] > 0:
            E = np.array([[0.5, 0.5]])
        else:
            E = np.array([[1.0, 0.0]])
        return P, E

    def table_derivs(self, theta, order):
        P, E = self.tables(theta)
        z = np.zeros
        return (
            P, E, z((1, 1, 1)), z((1, 1, 2)),
            z((1, 1, 1, 1)), z((1, 1, 1, 2)),
            z((1, 1, 1, 1, 1)), z((1, 1, 1, 1, 2)),
        )

    def default_start(self, y):
        return np.ones(1)


def test_fisher_empty_for_parameter_free_model():
    model = FixedTableHmm(
        np.array([[0.8, 0.2], [0.3, 0.7]]),
        np.array([[0.9, 0.1], [0.15, 0.85]]),
    )
    for est in (
        fisher_hessian_estimate(model, np.zeros(0), 100, 0),
        fisher_score_estimate(model, np.zeros(0), 100, 0),
    ):
        assert est.matrix.shape == (0, 0)
        assert est.burn_in == 10
    assert fisher_hessian_estimate(model, np.zeros(0), 100, 0).method == "hessian-average"
    assert fisher_score_estimate(model, np.zeros(0), 100, 0).method == "score-outer"


def test_fisher_estimates_are_deterministic():
    a = fisher_hessian_estimate(Tilt3(), [0.1], 5000, 41)
    b = fisher_hessian_estimate(Tilt3(), [0.1], 5000, 41)
    np.testing.assert_array_equal(a.matrix, b.matrix)
    np.testing.assert_array_equal(a.se_proxy, b.se_proxy)


def test_fisher_hessian_and_score_routes_agree():
    H = fisher_hessian_estimate(Tilt3(), [0.1], 30_000, 41)
    S = fisher_score_estimate(Tilt3(), [0.1], 30_000, 42)
    gap = abs(H.matrix[0, 0] - S.matrix[0, 0])
    assert gap < 3 * np.hypot(H.se_proxy[0, 0], S.se_proxy[0, 0])


def test_fisher_seed_independence():
    a = fisher_hessian_estimate(Tilt3(), [0.1], 30_000, 41)
    b = fisher_hessian_estimate(Tilt3(), [0.1], 30_000, 43)
    gap = abs(a.matrix[0, 0] - b.matrix[0, 0])
    assert gap < 3 * np.hypot(a.se_proxy[0, 0], b.se_proxy[0, 0])


def test_kl_zero_at_equal_parameters():
    est = kl_estimate(Tilt3(), [0.1], [0.1], 2000, 7)
    assert est.value == 0.0
    assert est.se_proxy == 0.0
    assert est.components[0] == est.components[1]


def test_kl_positive_away_from_truth():
    est = kl_estimate(Tilt3(), [0.15], [0.0], 20_000, 7)
    assert est.value > 3 * est.se_proxy
    assert est.burn_in == 2000
    assert not est.tagged_infinite
    assert abs((est.components[0] - est.components[1]) - est.value) < 1e-15


def test_kl_error_proxy_shrinks_with_sample_size():
    for seed in (1, 2, 3):
        small = kl_estimate(Tilt3(), [0.15], [0.0], 5000, seed)
        large = kl_estimate(Tilt3(), [0.15], [0.0], 20_000, seed)
        assert small.se_proxy / large.se_proxy > 1.2


def test_kl_support_mismatch_is_tagged_infinite():
    model = SupportSwitch()
    est = kl_estimate(model, [1.0], [-1.0], 500, 3)
    assert est.tagged_infinite
    assert est.value == math.inf
    assert math.isnan(est.se_proxy)
    assert est.components[1] == -math.inf


def test_kl_exact_small_pinned_value():
    got = kl_exact_small(Tilt3(), [0.2], [0.0], 8)
    assert abs(got - 0.0100298423583505) < 1e-13


def test_kl_exact_small_properties():
    model = Tilt3()
    assert kl_exact_small(model, [0.17], [0.17], 6) == 0.0
    for d1, d0 in ((0.1, 0.0), (-0.2, 0.1), (0.3, -0.3)):
        assert kl_exact_small(model, [d1], [d0], 5) >= 0.0
    with pytest.raises(TooLarge):
        kl_exact_small(model, [0.1], [0.0], 13)


def test_kl_exact_small_support_mismatch():
    assert kl_exact_small(SupportSwitch(), [1.0], [-1.0], 4) == math.inf


def test_crlb_closed_form():
    rep = crlb_report(np.array([[4.0]]), [1.0], 100)
    assert rep["classical"] == 0.25
    assert rep["minimax"] == 1.0 / 64.0
    assert rep["per_n"] == {100: 0.0025}
    assert abs(rep["condition"] - 1.0) < 1e-12


def test_crlb_ar1_information_value():
    rep = crlb_report(np.array([[4.0 / 3.0]]), [1.0], [100, 200])
    assert abs(rep["classical"] - 0.75) < 1e-12
    assert abs(rep["per_n"][100] - 0.0075) < 1e-14
    assert abs(rep["per_n"][200] - 0.00375) < 1e-14


def test_crlb_direction_scaling():
    I = np.array([[2.0, 0.3], [0.3, 1.0]])
    v = np.array([1.0, -2.0])
    base = crlb_report(I, v, 10)
    scaled = crlb_report(I, 3.0 * v, 10)
    assert abs(scaled["classical"] - 9.0 * base["classical"]) < 1e-12
    assert abs(scaled["minimax"] - base["minimax"]) < 1e-15


def test_crlb_singular_information_warns():
    I = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.warns(SingularInformation):
        rep = crlb_report(I, [1.0, -1.0], 10)
    assert rep["minimax"] == math.inf  # v is in the null space
    assert np.isfinite(rep["classical"])


def test_additivity_identical_components_is_exact():
    r = kl_additivity_check(
        Tilt3(), Tilt3(), ([0.15], [0.15]), ([0.0], [0.0]), 8000, 3
    )
    assert r["k_a"] == r["k_b"]
    assert r["k_product"] == 2.0 * r["k_a"]
    assert r["difference"] == 0.0


def test_additivity_mixed_families():
    r = kl_additivity_check(
        Tilt3(),
        Garch11(),
        ([0.15], [0.1, 0.2, 0.7]),
        ([0.0], [0.12, 0.18, 0.68]),
        8000,
        3,
    )
    assert abs(r["difference"]) < 1e-12
    assert r["k_a"] > 0 and r["k_b"] > 0
    assert not r["tagged_infinite"]


def test_additivity_support_mismatch_flagged():
    r = kl_additivity_check(
        Tilt3(), SupportSwitch(), ([0.15], [1.0]), ([0.0], [-1.0]), 500, 3
    )
    assert r["tagged_infinite"]
    assert r["k_product"] == math.inf
    assert np.isfinite(r["k_a"])
    assert r["k_b"] == math.inf


def test_quadratic_check_ratio_approaches_one():
    out = quadratic_check(Tilt3(), [0.1], [1.0], (0.2, 0.1, 0.05), 20_000, 11)
    rhos = [row["rho"] for row in out["rows"]]
    gaps = [row["abs_rho_minus_1"] for row in out["rows"]]
    assert all(0.95 < r < 1.05 for r in rhos)
    assert gaps[0] > gaps[1] > gaps[2]
    assert out["v_I_v"] > 0
    assert all(row["k_se"] > 0 for row in out["rows"])


def test_quadratic_check_grid_validation():
    with pytest.raises(ValueError):
        quadratic_check(Tilt3(), [0.1], [1.0], (0.05, 0.1), 100, 0)
    with pytest.raises(ValueError):
        quadratic_check(Tilt3(), [0.1], [1.0], (0.1, -0.05), 100, 0)
    with pytest.raises(ValueError):
        quadratic_check(Tilt3(), [0.1], [1.0], (), 100, 0)


def test_kl_sweep_replicates_and_coupling():
    grid = [[0.10], [0.13], [0.16], [0.19]]
    out = kl_sweep(Tilt3(), grid, [0.0], 4000, 5, n_reps=3)
    assert out["values"].shape == (3, 4)
    assert np.all(np.diff(out["mean"]) > 0)
    assert out["second_diff"].shape == (2,)
    # replicate-coupled error bars resolve second differences far better
    assert np.all(out["second_diff_se_coupled"] < out["second_diff_se"])
    again = kl_sweep(Tilt3(), grid, [0.0], 4000, 5, n_reps=3)
    np.testing.assert_array_equal(out["values"], again["values"])
    threaded = kl_sweep(Tilt3(), grid, [0.0], 4000, 5, n_reps=3, max_workers=2)
    np.testing.assert_array_equal(out["values"], threaded["values"])


def test_kl_sweep_single_replicate_has_zero_se():
    out = kl_sweep(Tilt3(), [[0.1], [0.15]], [0.0], 2000, 1, n_reps=1)
    np.testing.assert_array_equal(out["se"], 0.0)
    assert out["values"].shape == (1, 2)
