"""GARCH(1,1) as a degenerate-hidden-state GHMM.

The conditional variance v_t = delta + alpha * y_{t-1}^2 + beta * v_{t-1}
is a deterministic function of past observations, so the filter state is
the variance itself and the likelihood is exact. theta = (delta, alpha,
beta) with delta > 0, alpha, beta >= 0 and alpha + beta < 1.

Two conventions for the starting variance v_0: the stationary mean
delta / (1 - alpha - beta) (default; its theta-derivatives are propagated),
or a fixed override whose derivatives are zero.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..core import FilterState
from ..errors import (
    DimensionMismatch,
    NonFinite,
    NonstationaryParameters,
    TooShort,
    UnsupportedOrder,
)
from ..montecarlo import long_run_average, stream
from ..sensitivity import DerivBundle, SensResult, symmetrize
from .base import GhmmModel

_LOG2PI = float(np.log(2.0 * np.pi))


class Garch11(GhmmModel):
    """GARCH(1,1) family; sigma0_sq=None selects the stationary start."""

    family = "garch11"
    max_order = 2

    def __init__(self, sigma0_sq: float | None = None):
        if sigma0_sq is not None and not sigma0_sq > 0.0:
            raise DimensionMismatch("sigma0_sq override must be positive")
        self.sigma0_sq = sigma0_sq

    @property
    def param_dim(self) -> int:
        return 3

    @property
    def param_names(self) -> list[str]:
        return ["delta", "alpha", "beta"]

    def validate_theta(self, theta) -> np.ndarray:
        theta = super().validate_theta(theta)
        delta, alpha, beta = theta
        if delta <= 0.0 or alpha < 0.0 or beta < 0.0:
            raise NonstationaryParameters(
                "need delta > 0 and alpha, beta >= 0"
            )
        if alpha + beta >= 1.0:
            raise NonstationaryParameters(
                f"alpha + beta = {alpha + beta:.6g} must be < 1"
            )
        return theta

    # -- starting variance -------------------------------------------------

    def init_variance(self, theta, order: int = 2):
        """(v0, dv0, d2v0) under the configured convention."""
        delta, alpha, beta = theta
        dv0 = np.zeros(3)
        d2v0 = np.zeros((3, 3))
        if self.sigma0_sq is not None:
            return float(self.sigma0_sq), dv0, d2v0
        s = 1.0 - alpha - beta
        v0 = delta / s
        if order >= 1:
            dv0[:] = (1.0 / s, delta / s**2, delta / s**2)
        if order >= 2:
            d2v0[0, 1] = d2v0[1, 0] = 1.0 / s**2
            d2v0[0, 2] = d2v0[2, 0] = 1.0 / s**2
            d2v0[1, 1] = d2v0[1, 2] = d2v0[2, 1] = d2v0[2, 2] = 2.0 * delta / s**3
        return float(v0), dv0, d2v0

    # -- filtering ---------------------------------------------------------

    @staticmethod
    def _check_obs(y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.shape[0] < 1:
            raise DimensionMismatch("observations must be a non-empty 1-d array")
        if not np.all(np.isfinite(y)):
            raise NonFinite("observations")
        return y

    @staticmethod
    def _gauss_inc(y, v) -> float:
        return -0.5 * (_LOG2PI + np.log(v) + y * y / v)

    def init_filter(self, theta, y0) -> FilterState:
        theta = self.validate_theta(theta)
        v0, _, _ = self.init_variance(theta, order=0)
        inc = self._gauss_inc(float(y0), v0)
        return FilterState(weights=(v0, float(y0)), log_norm=float(inc), t=0)

    def filter_step(self, theta, state: FilterState, y) -> FilterState:
        theta = self.validate_theta(theta)
        delta, alpha, beta = theta
        v_prev, y_prev = state.weights
        v = delta + alpha * y_prev * y_prev + beta * v_prev
        t = state.t + 1
        if not np.isfinite(v) or v <= 0.0:
            raise NonFinite("conditional variance", t=t)
        inc = self._gauss_inc(float(y), v)
        return FilterState(
            weights=(v, float(y)), log_norm=state.log_norm + float(inc), t=t
        )

    def _run(self, theta, y, order: int) -> tuple:
        theta = self.validate_theta(theta)
        y = self._check_obs(y)
        n = y.shape[0]
        v0, dv0, d2v0 = self.init_variance(theta, order=order)
        inc = np.empty(n)
        score_inc = np.zeros((n, 3)) if order >= 1 else np.zeros((0, 3))
        hess_inc = np.zeros((n, 3, 3)) if order >= 2 else np.zeros((0, 3, 3))
        fail = kernels.garch_sens(
            y,
            float(theta[0]),
            float(theta[1]),
            float(theta[2]),
            v0,
            dv0,
            d2v0,
            order,
            inc,
            score_inc,
            hess_inc,
        )
        if fail >= 0:
            raise NonFinite("conditional variance", t=int(fail) - 1)
        return inc, score_inc, hess_inc

    def loglik_increments(self, theta, y) -> np.ndarray:
        inc, _, _ = self._run(theta, y, order=0)
        return inc

    def sensitivity_pass(self, theta, y, order: int) -> SensResult:
        if order < 1 or order > 2:
            raise UnsupportedOrder("orders 1 and 2 are supported")
        inc, score_inc, hess_inc = self._run(theta, y, order)
        loglik = float(inc.sum())
        score = score_inc.sum(axis=0)
        if order == 1:
            return SensResult(
                order=1,
                loglik_inc=inc,
                loglik=loglik,
                score_inc=score_inc,
                score=score,
            )
        hess_raw = hess_inc.sum(axis=0)
        hess, asym = symmetrize(hess_raw)
        return SensResult(
            order=2,
            loglik_inc=inc,
            loglik=loglik,
            score_inc=score_inc,
            score=score,
            hess_inc=hess_inc,
            hessian=hess,
            asymmetry=asym,
        )

    def init_sensitivity(self, theta, y0, order: int) -> DerivBundle:
        theta = self.validate_theta(theta)
        if order < 1 or order > 2:
            raise UnsupportedOrder("orders 1 and 2 are supported")
        v0, dv0, d2v0 = self.init_variance(theta, order=order)
        y0 = float(y0)
        inc, dinc, d2inc = _gauss_inc_derivs(y0, v0, dv0, d2v0, order)
        state = {
            "v": v0,
            "dv": dv0,
            "d2v": d2v0,
            "y": y0,
            "score": dinc,
            "hess": d2inc,
        }
        return DerivBundle(vectors=state, log_norm=float(inc), t=0, order=order)

    def sensitivity_step(self, theta, bundle: DerivBundle, y) -> DerivBundle:
        theta = self.validate_theta(theta)
        delta, alpha, beta = theta
        order = bundle.order
        st = bundle.vectors
        v_p, dv_p, d2v_p, y_p = st["v"], st["dv"], st["d2v"], st["y"]
        v = delta + alpha * y_p * y_p + beta * v_p
        t = bundle.t + 1
        if not np.isfinite(v) or v <= 0.0:
            raise NonFinite("conditional variance", t=t)
        dv = np.array([1.0, y_p * y_p, v_p]) + beta * dv_p
        d2v = beta * d2v_p.copy()
        d2v[:, 2] += dv_p
        d2v[2, :] += dv_p
        yf = float(y)
        inc, dinc, d2inc = _gauss_inc_derivs(yf, v, dv, d2v, order)
        state = {
            "v": v,
            "dv": dv,
            "d2v": d2v,
            "y": yf,
            "score": st["score"] + dinc,
            "hess": st["hess"] + d2inc if order >= 2 else None,
        }
        return DerivBundle(
            vectors=state, log_norm=bundle.log_norm + float(inc), t=t, order=order
        )

    def bundle_score(self, bundle: DerivBundle) -> np.ndarray:
        return bundle.vectors["score"]

    def bundle_hessian(self, bundle: DerivBundle) -> np.ndarray:
        if bundle.order < 2:
            raise UnsupportedOrder("Hessian requires an order-2 bundle")
        return bundle.vectors["hess"]

    # -- simulation --------------------------------------------------------

    def simulate_arrays(self, theta, n: int, rng, x0=None):
        theta = self.validate_theta(theta)
        v0, _, _ = self.init_variance(theta, order=0)
        if x0 is not None:
            v0 = float(x0)
            if v0 <= 0.0:
                raise DimensionMismatch("starting variance must be positive")
        z = rng.standard_normal(n)
        ys = np.empty(n)
        vs = np.empty(n)
        kernels.garch_sim(
            z, float(theta[0]), float(theta[1]), float(theta[2]), v0, ys, vs
        )
        return ys, vs

    def default_start(self, y) -> np.ndarray:
        y = self._check_obs(y)
        return np.array([0.1 * max(float(np.var(y)), 1e-8), 0.1, 0.8])


def _gauss_inc_derivs(y, v, dv, d2v, order: int):
    """Log-density increment of N(0, v) at y and its theta-derivatives."""
    r = y * y / v
    inc = -0.5 * (_LOG2PI + np.log(v) + r)
    g1 = (r - 1.0) / (2.0 * v)
    dinc = g1 * dv
    if order < 2:
        return inc, dinc, None
    ca = (2.0 * r - 1.0) / (v * v)
    cb = (1.0 - r) / v
    d2inc = -0.5 * (ca * np.outer(dv, dv) + cb * d2v)
    return inc, dinc, d2inc


def garch11(sigma0_sq: float | None = None) -> Garch11:
    return Garch11(sigma0_sq=sigma0_sq)


def garch_stationary_mean(theta) -> float:
    """Stationary mean of the conditional variance: delta / (1 - a - b)."""
    delta, alpha, beta = np.asarray(theta, dtype=float)
    return float(delta / (1.0 - alpha - beta))


def garch_fisher_series_mc(
    theta, n: int, seed: int, burn_in=None, sigma0_sq: float | None = None
):
    """(value, se) for the (beta, beta) Fisher entry via the variance series.

    Holding the infinite past, dv_t/dbeta = sum_{k>=1} beta^(k-1) v_{t-k},
    and the Gaussian scale score contributes E[(dv/dbeta)^2 / (2 v_t^2)].
    A stationary path is simulated, the geometric series truncated where
    beta^k < 1e-12, and windows before the truncation horizon discarded.
    """
    model = Garch11(sigma0_sq=sigma0_sq)
    theta = model.validate_theta(theta)
    beta = float(theta[2])
    if beta > 0.0:
        K = max(int(np.ceil(np.log(1e-12) / np.log(beta))), 1)
    else:
        K = 1
    if n <= K + 20:
        raise TooShort(f"need n well beyond the truncation horizon {K}")
    rng = stream(seed)
    _, vs = model.simulate_arrays(theta, n, rng)
    w = beta ** np.arange(K, dtype=float)
    conv = np.convolve(vs, w)             # conv[t-1] = sum_k w[k-1] v[t-k]
    S = conv[K - 1 : n - 1]               # dv_t/dbeta for t = K..n-1
    vt = vs[K:]
    g = S * S / (2.0 * vt * vt)
    if burn_in is None:
        burn_in = max((n - K) // 10, 0)
    value, se = long_run_average(g, burn_in=burn_in)
    return float(value), float(se)


def garch_fisher_series(
    theta, n: int, seed: int, burn_in=None, sigma0_sq: float | None = None
) -> float:
    """Monte Carlo (beta, beta) Fisher information entry; see the _mc variant."""
    value, _ = garch_fisher_series_mc(
        theta, n, seed, burn_in=burn_in, sigma0_sq=sigma0_sq
    )
    return value
