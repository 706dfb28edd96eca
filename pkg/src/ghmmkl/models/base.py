"""Model interface and shared finite-state machinery.

A model object is a parametrized family: structure lives on the object,
the parameter vector theta is passed to every operation. Observations are
handled as numpy arrays; finite alphabets use 0-based symbol indices
internally (file formats attach 1-based labels, see report).

FiniteGhmm implements the entire filtering / sensitivity / simulation
contract on top of two subclass hooks: `tables(theta)` returning the
transition and emission tables, and `table_derivs(theta, order)` returning
their parameter derivatives. Initial laws default to the stationary law of
the transition table, differentiated implicitly through the linear system
that defines it.
"""

from __future__ import annotations

import numpy as np

from ..core import FilterState
from ..errors import (
    AllZeroWeights,
    DimensionMismatch,
    InvalidStochasticMatrix,
    NonFinite,
    UnsupportedOrder,
)
from ..multiindex import (
    count,
    decompositions,
    first_order_positions,
    indices,
    leibniz_coeff,
    second_order_positions,
    sub_indices,
)
from ..sensitivity import DerivBundle, SensResult, symmetrize
from .. import kernels


class GhmmModel:
    """Abstract parametrized general hidden Markov model."""

    family: str = "ghmm"

    @property
    def param_dim(self) -> int:
        raise NotImplementedError

    @property
    def param_names(self) -> list[str]:
        return [f"p{i}" for i in range(self.param_dim)]

    def validate_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.param_dim,):
            raise DimensionMismatch(
                f"theta must have shape ({self.param_dim},), got {theta.shape}"
            )
        if not np.all(np.isfinite(theta)):
            raise NonFinite("theta")
        return theta

    # filtering / sensitivity hooks implemented by subclasses
    def init_filter(self, theta, y0) -> FilterState:
        raise NotImplementedError

    def filter_step(self, theta, state: FilterState, y) -> FilterState:
        raise NotImplementedError

    def loglik_increments(self, theta, y) -> np.ndarray:
        raise NotImplementedError

    def init_sensitivity(self, theta, y0, order: int) -> DerivBundle:
        raise NotImplementedError

    def sensitivity_step(self, theta, bundle: DerivBundle, y) -> DerivBundle:
        raise NotImplementedError

    def sensitivity_pass(self, theta, y, order: int) -> SensResult:
        raise NotImplementedError

    def simulate_arrays(self, theta, n: int, rng, x0=None):
        """Draw (y, hidden) under theta; hidden may be None."""
        raise NotImplementedError

    def default_start(self, y) -> np.ndarray:
        """Generic optimizer starting point for this family."""
        raise NotImplementedError


def check_stochastic(M: np.ndarray, name: str, tol: float = 1e-8) -> None:
    if not np.all(np.isfinite(M)):
        raise NonFinite(name)
    if np.any(M < -1e-12):
        raise InvalidStochasticMatrix(f"{name} has negative entries")
    rows = M.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > tol):
        raise InvalidStochasticMatrix(f"{name} rows must sum to 1")


def stationary_law(P: np.ndarray) -> np.ndarray:
    """Stationary distribution of a stochastic matrix via a bordered solve."""
    return stationary_with_derivs(P, None, None, None, order=0)[0]


def stationary_with_derivs(P, dP, d2P, d3P, order: int):
    """Stationary law and its parameter derivatives up to `order`.

    Differentiates the defining system (I - P^T) pi = 0, sum(pi) = 1
    implicitly; all right-hand sides share one factorization of the
    bordered matrix B = (I - P^T) + 11^T. Derivative vectors automatically
    satisfy sum(dpi) = 0. Returns (pi, [dpi, d2pi, d3pi][:order]).
    """
    D = P.shape[0]
    B = np.eye(D) - P.T + np.ones((D, D))
    ones = np.ones(D)
    try:
        pi = np.linalg.solve(B, ones)
    except np.linalg.LinAlgError as exc:
        raise InvalidStochasticMatrix(
            "stationary law is not unique for this transition table"
        ) from exc
    if np.any(pi < -1e-10):
        raise InvalidStochasticMatrix("stationary solve produced negative mass")
    resid = np.abs(pi - P.T @ pi).max()
    if resid > 1e-8:
        raise InvalidStochasticMatrix(
            f"stationary residual {resid:.2e} too large"
        )
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    out = [pi]
    if order >= 1:
        q = dP.shape[0]
        rhs = np.einsum("asx,s->xa", dP, pi)          # columns: dP_a^T pi
        dpi = np.linalg.solve(B, rhs).T               # (q, D)
        out.append(dpi)
    if order >= 2:
        rhs2 = (
            np.einsum("asx,bs->xab", dP, dpi)
            + np.einsum("bsx,as->xab", dP, dpi)
            + np.einsum("absx,s->xab", d2P, pi)
        )
        d2pi = np.linalg.solve(B, rhs2.reshape(D, q * q)).reshape(D, q, q)
        d2pi = np.moveaxis(d2pi, 0, 2)                # (q, q, D)
        out.append(d2pi)
    if order >= 3:
        rhs3 = (
            np.einsum("absx,cs->xabc", d2P, dpi)
            + np.einsum("acsx,bs->xabc", d2P, dpi)
            + np.einsum("bcsx,as->xabc", d2P, dpi)
            + np.einsum("asx,bcs->xabc", dP, d2pi)
            + np.einsum("bsx,acs->xabc", dP, d2pi)
            + np.einsum("csx,abs->xabc", dP, d2pi)
            + np.einsum("abcsx,s->xabc", d3P, pi)
        )
        d3pi = np.linalg.solve(B, rhs3.reshape(D, q * q * q)).reshape(D, q, q, q)
        d3pi = np.moveaxis(d3pi, 0, 3)                # (q, q, q, D)
        out.append(d3pi)
    return tuple(out)


def _deriv_slice(mi, base, d1, d2, d3):
    """Table derivative for one multi-index, from stacked tensors."""
    deg = sum(mi)
    if deg == 0:
        return base
    picks = [i for i, m in enumerate(mi) for _ in range(m)]
    if deg == 1:
        return d1[picks[0]]
    if deg == 2:
        return d2[picks[0], picks[1]]
    if deg == 3:
        return d3[picks[0], picks[1], picks[2]]
    raise UnsupportedOrder(f"table derivatives available up to order 3, got {deg}")


class FiniteGhmm(GhmmModel):
    """Finite-state finite-alphabet GHMM driven by parametrized tables.

    Subclasses provide `n_states`, `n_symbols`, `tables(theta)` and
    `table_derivs(theta, order)`; the latter returns
    (P, E, dP, dE, d2P, d2E, d3P, d3E) with the higher tensors present up to
    the requested order (None beyond). `init_dist` is either the string
    "stationary" or a fixed probability vector (whose theta-derivatives are
    zero).
    """

    max_order = 3
    init_dist = "stationary"

    @property
    def n_states(self) -> int:
        raise NotImplementedError

    @property
    def n_symbols(self) -> int:
        raise NotImplementedError

    def tables(self, theta) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def table_derivs(self, theta, order: int):
        raise NotImplementedError

    # -- initial law -------------------------------------------------------

    def initial_law(self, theta):
        if isinstance(self.init_dist, str):
            P, _ = self.tables(theta)
            return stationary_law(P)
        nu = np.asarray(self.init_dist, dtype=float)
        if nu.shape != (self.n_states,):
            raise DimensionMismatch("initial distribution has wrong length")
        return nu

    def initial_law_derivs(self, theta, order: int):
        """(pi, dpi, d2pi, d3pi) up to `order`; zeros for fixed inits."""
        q = self.param_dim
        D = self.n_states
        if isinstance(self.init_dist, str):
            P, E, dP, dE, d2P, d2E, d3P, d3E = self.table_derivs(theta, order)
            got = stationary_with_derivs(P, dP, d2P, d3P, order)
        else:
            nu = self.initial_law(theta)
            got = [nu]
            for r in range(1, order + 1):
                got.append(np.zeros((q,) * r + (D,)))
        out = list(got) + [None] * (3 - (len(got) - 1))
        return tuple(out[:4])

    # -- plain filtering ---------------------------------------------------

    def _validated_tables(self, theta):
        theta = self.validate_theta(theta)
        P, E = self.tables(theta)
        check_stochastic(P, "transition table")
        check_stochastic(E, "emission table")
        return theta, P, E

    def init_filter(self, theta, y0) -> FilterState:
        theta, P, E = self._validated_tables(theta)
        pi = self.initial_law(theta)
        w = pi * E[:, int(y0)]
        c = w.sum()
        if not np.isfinite(c):
            raise NonFinite("filter normalizer", t=0)
        if c <= 0.0:
            raise AllZeroWeights(0)
        return FilterState(weights=w / c, log_norm=float(np.log(c)), t=0)

    def filter_step(self, theta, state: FilterState, y) -> FilterState:
        theta, P, E = self._validated_tables(theta)
        t = state.t + 1
        u = (state.weights @ P) * E[:, int(y)]
        c = u.sum()
        if not np.isfinite(c):
            raise NonFinite("filter normalizer", t=t)
        if c <= 0.0:
            raise AllZeroWeights(t)
        return FilterState(
            weights=u / c, log_norm=state.log_norm + float(np.log(c)), t=t
        )

    def _symbol_kernel(self, P, E) -> np.ndarray:
        # B[a, s, x] = P[s, x] * E[x, a]
        return P[None, :, :] * E.T[:, None, :]

    def _check_symbols(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim != 1 or y.shape[0] < 1:
            raise DimensionMismatch("observations must be a non-empty 1-d array")
        y = y.astype(np.int64)
        if y.min() < 0 or y.max() >= self.n_symbols:
            raise DimensionMismatch(
                f"symbols must lie in [0, {self.n_symbols - 1}]"
            )
        return y

    def loglik_increments(self, theta, y) -> np.ndarray:
        theta, P, E = self._validated_tables(theta)
        y = self._check_symbols(y)
        n = y.shape[0]
        pi = self.initial_law(theta)
        w = pi * E[:, y[0]]
        c = w.sum()
        if not np.isfinite(c):
            raise NonFinite("filter normalizer", t=0)
        if c <= 0.0:
            raise AllZeroWeights(0)
        inc = np.empty(n)
        inc[0] = np.log(c)
        if n > 1:
            w = np.ascontiguousarray(w / c)
            B = np.ascontiguousarray(self._symbol_kernel(P, E))
            fail = kernels.filter_seq(y[1:], B, w, inc[1:])
            if fail >= 0:
                self._raise_step_failure(P, E, pi, y, int(fail))
        return inc

    def _raise_step_failure(self, P, E, pi, y, fail: int):
        """Re-run the failing prefix in numpy to classify the failure."""
        w = pi * E[:, y[0]]
        c = w.sum()
        w = w / c
        t = 0
        for t in range(1, fail + 1):
            u = (w @ P) * E[:, y[t]]
            c = u.sum()
            if not np.isfinite(c):
                raise NonFinite("filter normalizer", t=t)
            if c <= 0.0:
                raise AllZeroWeights(t)
            w = u / c
        raise NonFinite("filter normalizer", t=t)

    # -- derivative bundles ------------------------------------------------

    def _table_deriv_stack(self, theta, order: int):
        P, E, dP, dE, d2P, d2E, d3P, d3E = self.table_derivs(theta, order)
        check_stochastic(P, "transition table")
        check_stochastic(E, "emission table")
        return P, E, (dP, d2P, d3P), (dE, d2E, d3E)

    def _step_kernels(self, theta, order: int, mis):
        """Per-symbol, per-multi-index step matrices.

        KER[a, k][s, x] = sum over splits lam + (k - lam) of
        C(k; lam) * D^lam P[s, x] * D^(k - lam) E[x, a].
        """
        P, E, dPs, dEs = self._table_deriv_stack(theta, order)
        D, A = self.n_states, self.n_symbols
        K = len(mis)
        KER = np.zeros((A, K, D, D))
        for k, mi in enumerate(mis):
            for lam in sub_indices(mi):
                rem = tuple(m - l for m, l in zip(mi, lam))
                cf = leibniz_coeff(mi, lam)
                Pd = _deriv_slice(lam, P, *dPs)
                Ed = _deriv_slice(rem, E, *dEs)
                # contribution cf * Pd[s, x] * Ed[x, a]
                KER[:, k, :, :] += cf * (Pd[None, :, :] * Ed.T[:, None, :])
        return KER

    def _init_bundle_vectors(self, theta, y0, order: int, mis):
        """Unnormalized bundle for the first observation.

        U[nu][x] = sum over lam <= nu of C(nu; lam) * D^lam pi[x]
                   * D^(nu - lam) E[x, y0].
        """
        P, E, dPs, dEs = self._table_deriv_stack(theta, order)
        pi, dpi, d2pi, d3pi = self.initial_law_derivs(theta, order)
        pi_stack = (dpi, d2pi, d3pi)
        D = self.n_states
        U = np.zeros((len(mis), D))
        col = int(y0)
        for k, mi in enumerate(mis):
            for lam in sub_indices(mi):
                rem = tuple(m - l for m, l in zip(mi, lam))
                cf = leibniz_coeff(mi, lam)
                piv = _deriv_slice(lam, pi, *pi_stack)
                Ed = _deriv_slice(rem, E, *dEs)
                U[k] += cf * piv * Ed[:, col]
        return U

    def init_sensitivity(self, theta, y0, order: int) -> DerivBundle:
        theta = self.validate_theta(theta)
        if order < 1 or order > self.max_order:
            raise UnsupportedOrder(
                f"derivative order must be in [1, {self.max_order}]"
            )
        mis = indices(self.param_dim, order)
        U = self._init_bundle_vectors(theta, int(y0), order, mis)
        c = U[0].sum()
        if not np.isfinite(c):
            raise NonFinite("filter normalizer", t=0)
        if c <= 0.0:
            raise AllZeroWeights(0)
        return DerivBundle(
            vectors=U / c, log_norm=float(np.log(c)), t=0, order=order
        )

    def sensitivity_step(self, theta, bundle: DerivBundle, y) -> DerivBundle:
        theta = self.validate_theta(theta)
        order = bundle.order
        mis = indices(self.param_dim, order)
        KER = self._step_kernels(theta, order, mis)
        _, dec_out, dec_ker, dec_in, dec_coef = decompositions(self.param_dim, order)
        V = bundle.vectors
        Vn = np.zeros_like(V)
        a = int(y)
        for o, kk, ii, cf in zip(dec_out, dec_ker, dec_in, dec_coef):
            Vn[o] += cf * (V[ii] @ KER[a, kk])
        c = Vn[0].sum()
        t = bundle.t + 1
        if not np.isfinite(c):
            raise NonFinite("filter normalizer", t=t)
        if c <= 0.0:
            raise AllZeroWeights(t)
        return DerivBundle(
            vectors=Vn / c,
            log_norm=bundle.log_norm + float(np.log(c)),
            t=t,
            order=order,
        )

    def bundle_score(self, bundle: DerivBundle) -> np.ndarray:
        """Running score extracted from a bundle."""
        q = self.param_dim
        mis = indices(q, bundle.order)
        pos = first_order_positions(q, mis)
        return bundle.vectors[pos].sum(axis=1)

    def bundle_hessian(self, bundle: DerivBundle) -> np.ndarray:
        """Running Hessian extracted from a bundle (order >= 2)."""
        if bundle.order < 2:
            raise UnsupportedOrder("Hessian requires an order-2 bundle")
        q = self.param_dim
        mis = indices(q, bundle.order)
        s = self.bundle_score(bundle)
        pos2 = second_order_positions(q, mis)
        M = bundle.vectors[pos2].sum(axis=2)
        return M - np.outer(s, s)

    def sensitivity_pass(self, theta, y, order: int) -> SensResult:
        theta = self.validate_theta(theta)
        y = self._check_symbols(y)
        q = self.param_dim
        n = y.shape[0]
        mis = indices(q, order)
        KER = np.ascontiguousarray(self._step_kernels(theta, order, mis))
        _, dec_out, dec_ker, dec_in, dec_coef = decompositions(q, order)
        idx1 = first_order_positions(q, mis)
        idx2 = (
            second_order_positions(q, mis)
            if order >= 2
            else np.zeros((q, q), dtype=np.int64)
        )
        b0 = self.init_sensitivity(theta, int(y[0]), order)
        V = np.ascontiguousarray(b0.vectors)
        inc = np.empty(n)
        inc[0] = b0.log_norm
        score_inc = np.zeros((n, q))
        hess_inc = np.zeros((n, q, q)) if order >= 2 else np.zeros((0, q, q))
        S_run = V[idx1].sum(axis=1)
        score_inc[0] = S_run
        if order >= 2:
            M0 = V[idx2].sum(axis=2)
            H_run = M0 - np.outer(S_run, S_run)
            hess_inc[0] = H_run
        else:
            H_run = np.zeros((q, q))
        if n > 1:
            fail = kernels.sens_seq(
                y[1:],
                KER,
                dec_out,
                dec_ker,
                dec_in,
                dec_coef,
                V,
                idx1,
                idx2,
                order,
                inc[1:],
                score_inc[1:],
                hess_inc[1:] if order >= 2 else np.zeros((n - 1, q, q)),
                S_run,
                H_run,
            )
            if fail >= 0:
                P, E = self.tables(theta)
                self._raise_step_failure(P, E, self.initial_law(theta), y, int(fail))
        loglik = float(inc.sum())
        if order >= 2:
            hess_raw = hess_inc.sum(axis=0)
            hess, asym = symmetrize(hess_raw)
            hess_inc_sym, _ = symmetrize(hess_inc)
            return SensResult(
                order=order,
                loglik_inc=inc,
                loglik=loglik,
                score_inc=score_inc,
                score=score_inc.sum(axis=0),
                hess_inc=hess_inc_sym,
                hessian=hess,
                asymmetry=asym,
            )
        return SensResult(
            order=order,
            loglik_inc=inc,
            loglik=loglik,
            score_inc=score_inc,
            score=score_inc.sum(axis=0),
        )

    # -- simulation --------------------------------------------------------

    def simulate_arrays(self, theta, n: int, rng, x0=None):
        theta, P, E = self._validated_tables(theta)
        pi = self.initial_law(theta)
        Pcum = np.ascontiguousarray(np.cumsum(P, axis=1))
        Ecum = np.ascontiguousarray(np.cumsum(E, axis=1))
        ux = rng.random(n)
        uy = rng.random(n)
        if x0 is None:
            x0 = int(np.searchsorted(np.cumsum(pi), ux[0], side="right"))
            x0 = min(x0, self.n_states - 1)
        else:
            x0 = int(x0)
            if not 0 <= x0 < self.n_states:
                raise DimensionMismatch("x0 outside the state space")
        xs = np.empty(n, dtype=np.int64)
        ys = np.empty(n, dtype=np.int64)
        kernels.finite_sim(Pcum, Ecum, x0, ux, uy, xs, ys)
        return ys, xs
