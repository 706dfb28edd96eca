"""Temporal restricted Boltzmann machines as exact finite HMMs.

A TRBM with P binary hidden units and D binary visible units defines

    P(y_t, h_t | h_{t-1}) = exp(y^T b_Y + y^T W h + h^T (b_H + W' h_prev))
                            / Z(h_prev),

which factorizes as P(h_t | h_{t-1}) * P(y_t | h_t): the emission given h
is a softmax over the 2^D visible patterns with scores y^T (b_Y + W h),
and the transition row for h_prev is a softmax over the 2^P hidden
patterns with scores h^T (b_H + W' h_prev) + log G(h), where
G(h) = sum_y exp(y^T (b_Y + W h)) is the emission normalizer. Emission
scores are linear in the parameters, so their table derivatives come from
the exponential-family formulas; transition scores carry log G(h), whose
parameter derivatives are emission cumulants, handled by the
composite-score softmax rules.

States and symbols index bit patterns little-endian: bit j of index i is
unit j's value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, NonFinite, SizeCap, StateSpaceTooLarge
from ..expfam import composite_derivative_tables, derivative_tables, softmax
from .base import FiniteGhmm
from .discrete import _TABLE_CAP

_UNIT_CAP = 6


def bit_patterns(width: int) -> np.ndarray:
    """(2^width, width) array of binary patterns, little-endian."""
    idx = np.arange(2**width)
    return ((idx[:, None] >> np.arange(width)[None, :]) & 1).astype(float)


@dataclass(frozen=True)
class TrbmSpec:
    """Weights and biases: W (D, P), Wp (P, P), b_Y (D), b_H (P)."""

    W: np.ndarray
    Wp: np.ndarray
    b_Y: np.ndarray
    b_H: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        Wp = np.atleast_2d(np.asarray(self.Wp, dtype=float))
        b_Y = np.atleast_1d(np.asarray(self.b_Y, dtype=float))
        b_H = np.atleast_1d(np.asarray(self.b_H, dtype=float))
        D, P = b_Y.shape[0], b_H.shape[0]
        if P > _UNIT_CAP or D > _UNIT_CAP:
            raise StateSpaceTooLarge(
                f"at most {_UNIT_CAP} hidden and visible units are supported"
            )
        if P < 1 or D < 1:
            raise DimensionMismatch("need at least one hidden and visible unit")
        if W.shape != (D, P):
            raise DimensionMismatch(f"W must be ({D}, {P})")
        if Wp.shape != (P, P):
            raise DimensionMismatch(f"Wp must be ({P}, {P})")
        for name, M in (("W", W), ("Wp", Wp), ("b_Y", b_Y), ("b_H", b_H)):
            if not np.all(np.isfinite(M)):
                raise NonFinite(name)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Wp", Wp)
        object.__setattr__(self, "b_Y", b_Y)
        object.__setattr__(self, "b_H", b_H)

    @property
    def n_hidden(self) -> int:
        return self.b_H.shape[0]

    @property
    def n_visible(self) -> int:
        return self.b_Y.shape[0]

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.W.ravel(), self.Wp.ravel(), self.b_Y, self.b_H]
        )


class TrbmHmm(FiniteGhmm):
    """Finite HMM over hidden bit patterns with packed TRBM parameters.

    theta stacks W row-major, then Wp row-major, then b_Y, then b_H.
    """

    family = "trbm"

    def __init__(self, n_hidden: int, n_visible: int):
        if n_hidden > _UNIT_CAP or n_visible > _UNIT_CAP:
            raise StateSpaceTooLarge(
                f"at most {_UNIT_CAP} hidden and visible units are supported"
            )
        if n_hidden < 1 or n_visible < 1:
            raise DimensionMismatch("need at least one hidden and visible unit")
        self._P = n_hidden
        self._D = n_visible
        self._HB = bit_patterns(n_hidden)    # (S, P)
        self._YB = bit_patterns(n_visible)   # (A, D)
        self._CE = None
        self._LT = None

    @property
    def n_states(self) -> int:
        return 2**self._P

    @property
    def n_symbols(self) -> int:
        return 2**self._D

    @property
    def param_dim(self) -> int:
        D, P = self._D, self._P
        return D * P + P * P + D + P

    @property
    def param_names(self) -> list[str]:
        D, P = self._D, self._P
        names = [f"w{j}_{k}" for j in range(D) for k in range(P)]
        names += [f"wp{j}_{k}" for j in range(P) for k in range(P)]
        names += [f"by{j}" for j in range(D)]
        names += [f"bh{j}" for j in range(P)]
        return names

    def unpack(self, theta):
        D, P = self._D, self._P
        theta = np.asarray(theta, dtype=float)
        W = theta[: D * P].reshape(D, P)
        Wp = theta[D * P : D * P + P * P].reshape(P, P)
        b_Y = theta[D * P + P * P : D * P + P * P + D]
        b_H = theta[D * P + P * P + D :]
        return W, Wp, b_Y, b_H

    # -- score matrices ----------------------------------------------------

    def _score_tables(self, theta):
        """Emission scores (S, A) and transition scores (S_from, S_to)."""
        W, Wp, b_Y, b_H = self.unpack(theta)
        HB, YB = self._HB, self._YB
        V = b_Y[None, :] + HB @ W.T                  # (S, D) per-state fields
        sE = V @ YB.T                                # (S, A)
        g = np.log(np.exp(sE - sE.max(axis=1, keepdims=True)).sum(axis=1))
        g = g + sE.max(axis=1)                       # log G(h), stable
        M = HB @ Wp @ HB.T                           # M[h, hp] = h . Wp . hp
        sT = (HB @ b_H + g)[None, :] + M.T           # rows indexed by h_prev
        return sE, sT

    def tables(self, theta):
        sE, sT = self._score_tables(theta)
        E = np.apply_along_axis(softmax, 1, sE)
        T = np.apply_along_axis(softmax, 1, sT)
        return T, E

    # -- parameter coefficient tensors (theta independent) -----------------

    def _emission_coeffs(self) -> np.ndarray:
        """(S, q, A): d emission score / d theta per state row."""
        if self._CE is None:
            D, P, q = self._D, self._P, self.param_dim
            S, A = self.n_states, self.n_symbols
            C = np.zeros((S, q, A))
            wblk = np.einsum("aj,hk->hjka", self._YB, self._HB)
            C[:, : D * P, :] = wblk.reshape(S, D * P, A)
            off = D * P + P * P
            C[:, off : off + D, :] = self._YB.T[None, :, :]
            self._CE = C
        return self._CE

    def _transition_linear_coeffs(self) -> np.ndarray:
        """(S_from, q, S_to): the linear part of d transition score / d theta."""
        if self._LT is None:
            D, P, q = self._D, self._P, self.param_dim
            S = self.n_states
            L = np.zeros((S, q, S))
            wpblk = np.einsum("hj,gk->gjkh", self._HB, self._HB)
            L[:, D * P : D * P + P * P, :] = wpblk.reshape(S, P * P, S)
            L[:, D * P + P * P + D :, :] = self._HB.T[None, :, :]
            self._LT = L
        return self._LT

    def table_derivs(self, theta, order: int):
        q = self.param_dim
        S, A = self.n_states, self.n_symbols
        if order >= 2 and q * q * S * max(S, A) > _TABLE_CAP:
            raise SizeCap("derivative tables exceed the memory cap")
        if order >= 3 and q**3 * S * max(S, A) > _TABLE_CAP:
            raise SizeCap("derivative tables exceed the memory cap")
        sE, sT = self._score_tables(theta)
        CE = self._emission_coeffs()
        LT = self._transition_linear_coeffs()
        E = np.empty((S, A))
        dE = np.zeros((q, S, A)) if order >= 1 else None
        d2E = np.zeros((q, q, S, A)) if order >= 2 else None
        d3E = np.zeros((q, q, q, S, A)) if order >= 3 else None
        # emission cumulants feed the transition scores through log G
        dg = np.zeros((q, S))
        d2g = np.zeros((q, q, S)) if order >= 2 else None
        d3g = np.zeros((q, q, q, S)) if order >= 3 else None
        for h in range(S):
            C = CE[h]
            p, dp, d2p, d3p = derivative_tables(sE[h], C, order)
            E[h] = p
            mu = C @ p
            dg[:, h] = mu
            if order >= 1:
                dE[:, h, :] = dp
            cen = C - mu[:, None]
            if order >= 2:
                d2E[:, :, h, :] = d2p
                d2g[:, :, h] = (cen * p[None, :]) @ cen.T
            if order >= 3:
                d3E[:, :, :, h, :] = d3p
                d3g[:, :, :, h] = np.einsum(
                    "ax,bx,cx,x->abc", cen, cen, cen, p
                )
        T = np.empty((S, S))
        dT = np.zeros((q, S, S)) if order >= 1 else None
        d2T = np.zeros((q, q, S, S)) if order >= 2 else None
        d3T = np.zeros((q, q, q, S, S)) if order >= 3 else None
        for hp in range(S):
            ds = LT[hp] + dg
            p, dp, d2p, d3p = composite_derivative_tables(
                sT[hp], ds, d2g, d3g, order
            )
            T[hp] = p
            if order >= 1:
                dT[:, hp, :] = dp
            if order >= 2:
                d2T[:, :, hp, :] = d2p
            if order >= 3:
                d3T[:, :, :, hp, :] = d3p
        return T, E, dT, dE, d2T, d2E, d3T, d3E

    def default_start(self, y) -> np.ndarray:
        return np.zeros(self.param_dim)


def trbm_to_hmm(spec: TrbmSpec) -> TrbmHmm:
    """Exact finite HMM for a TRBM, with the packed parameters attached.

    The returned model's default_theta holds the spec's packed parameter
    vector; every model method takes theta explicitly, so the same model
    object serves the whole parameter space of its shape.
    """
    model = TrbmHmm(spec.n_hidden, spec.n_visible)
    model.default_theta = spec.pack()
    return model


def joint_conditional_table(spec: TrbmSpec) -> np.ndarray:
    """(S_prev, A, S) table of P(y, h | h_prev) by direct normalization.

    Brute-force reference for the factorized tables: each slice normalizes
    exp(y^T b_Y + y^T W h + h^T (b_H + W' h_prev)) over all 2^(P+D) pairs.
    """
    model = TrbmHmm(spec.n_hidden, spec.n_visible)
    HB, YB = model._HB, model._YB
    S, A = model.n_states, model.n_symbols
    out = np.empty((S, A, S))
    for hp in range(S):
        logits = (
            (YB @ spec.b_Y)[:, None]
            + YB @ spec.W @ HB.T
            + (HB @ (spec.b_H + spec.Wp @ HB[hp]))[None, :]
        )
        z = np.exp(logits - logits.max())
        out[hp] = z / z.sum()
    return out
