"""Finite-alphabet model families.

Symbols are 0-based indices everywhere in the array API; file formats label
them 1-based. Three kinds of families live here:

* FixedTableHmm: frozen tables, empty parameter vector. The workhorse for
  oracle cross-checks against enumeration.
* Tilt3: a three-state chain with uniform transitions and a binary alphabet
  whose single parameter tilts the middle state's emission. The two outer
  states emit deterministically (opposite symbols), so observations never
  pin down the hidden state exactly; the family stays strictly hidden for
  every admissible tilt.
* LogitHmm / KOrderLogitHmm: fully parametrized softmax-row families used
  for fitting, the latter on the tuple embedding of a k-step memory chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, InvalidStochasticMatrix, SizeCap
from ..expfam import derivative_tables
from .base import FiniteGhmm

_TABLE_CAP = 5e7


class FixedTableHmm(FiniteGhmm):
    """Finite HMM with constant tables and no free parameters."""

    family = "table"

    def __init__(self, transition, emission, init="stationary"):
        self._P = np.asarray(transition, dtype=float)
        self._E = np.asarray(emission, dtype=float)
        if self._P.ndim != 2 or self._P.shape[0] != self._P.shape[1]:
            raise DimensionMismatch("transition table must be square")
        if self._E.ndim != 2 or self._E.shape[0] != self._P.shape[0]:
            raise DimensionMismatch(
                "emission table must have one row per hidden state"
            )
        if not isinstance(init, str):
            init = np.asarray(init, dtype=float)
            if init.shape != (self._P.shape[0],):
                raise DimensionMismatch("initial distribution has wrong length")
            if np.any(init < 0) or abs(init.sum() - 1.0) > 1e-8:
                raise InvalidStochasticMatrix("initial distribution invalid")
        self.init_dist = init

    @property
    def param_dim(self) -> int:
        return 0

    @property
    def param_names(self) -> list[str]:
        return []

    @property
    def n_states(self) -> int:
        return self._P.shape[0]

    @property
    def n_symbols(self) -> int:
        return self._E.shape[1]

    def tables(self, theta):
        return self._P, self._E

    def table_derivs(self, theta, order: int):
        D, A = self.n_states, self.n_symbols
        z = lambda *s: np.zeros(s)
        dP, dE = z(0, D, D), z(0, D, A)
        d2P, d2E = z(0, 0, D, D), z(0, 0, D, A)
        d3P, d3E = z(0, 0, 0, D, D), z(0, 0, 0, D, A)
        return self._P, self._E, dP, dE, d2P, d2E, d3P, d3E

    def default_start(self, y) -> np.ndarray:
        return np.zeros(0)


def discrete_hmm(transition, emission, init="stationary") -> FixedTableHmm:
    """Finite HMM from explicit tables; init is "stationary" or a vector."""
    return FixedTableHmm(transition, emission, init)


class Tilt3(FiniteGhmm):
    """Three hidden states, two symbols, one emission-tilt parameter.

    Transitions are uniform (1/3 everywhere), so the stationary law is
    uniform for every theta and carries no parameter dependence. Emission of
    the first symbol per state is (1, 0.5 + delta, 0); delta must stay
    strictly inside (-0.5, 0.5).
    """

    family = "tilt3"

    @property
    def param_dim(self) -> int:
        return 1

    @property
    def param_names(self) -> list[str]:
        return ["delta"]

    @property
    def n_states(self) -> int:
        return 3

    @property
    def n_symbols(self) -> int:
        return 2

    def validate_theta(self, theta) -> np.ndarray:
        theta = super().validate_theta(theta)
        if not -0.5 < theta[0] < 0.5:
            raise InvalidStochasticMatrix(
                "delta must lie strictly inside (-0.5, 0.5)"
            )
        return theta

    def tables(self, theta):
        delta = float(np.atleast_1d(theta)[0])
        P = np.full((3, 3), 1.0 / 3.0)
        E = np.array(
            [
                [1.0, 0.0],
                [0.5 + delta, 0.5 - delta],
                [0.0, 1.0],
            ]
        )
        return P, E

    def table_derivs(self, theta, order: int):
        P, E = self.tables(theta)
        dP = np.zeros((1, 3, 3))
        dE = np.zeros((1, 3, 2))
        dE[0, 1, 0] = 1.0
        dE[0, 1, 1] = -1.0
        d2P = np.zeros((1, 1, 3, 3))
        d2E = np.zeros((1, 1, 3, 2))
        d3P = np.zeros((1, 1, 1, 3, 3))
        d3E = np.zeros((1, 1, 1, 3, 2))
        return P, E, dP, dE, d2P, d2E, d3P, d3E

    def default_start(self, y) -> np.ndarray:
        return np.zeros(1)


def tilt3() -> Tilt3:
    return Tilt3()


# ---------------------------------------------------------------------------
# softmax-row fitting families


def _row_softmax_tables(n_rows, n_cols, q, order, row_specs):
    """Assemble a table and its derivatives from per-row softmax blocks.

    row_specs yields (row, support, global_ids) where support lists the
    columns the row can reach and global_ids the parameter indices of its
    len(support) - 1 free logits (the last support column is pinned at
    logit 0). Distinct rows may share parameter ids (tied rows); they write
    disjoint slices, so no accumulation is needed.
    """
    T = np.zeros((n_rows, n_cols))
    dT = np.zeros((q, n_rows, n_cols)) if order >= 1 else None
    d2T = np.zeros((q, q, n_rows, n_cols)) if order >= 2 else None
    d3T = np.zeros((q, q, q, n_rows, n_cols)) if order >= 3 else None
    for row, support, g, logits in row_specs:
        s = len(support)
        scores = np.concatenate([logits, [0.0]])
        B = np.zeros((s - 1, s))
        B[np.arange(s - 1), np.arange(s - 1)] = 1.0
        p, dp, d2p, d3p = derivative_tables(scores, B, order)
        T[row, support] = p
        if order >= 1:
            dT[np.ix_(g, [row], support)] = dp[:, None, :]
        if order >= 2:
            d2T[np.ix_(g, g, [row], support)] = d2p[:, :, None, :]
        if order >= 3:
            d3T[np.ix_(g, g, g, [row], support)] = d3p[:, :, :, None, :]
    return T, dT, d2T, d3T


class LogitHmm(FiniteGhmm):
    """Fully parametrized HMM in softmax coordinates.

    theta stacks D*(D-1) transition logits (row-major, last column of each
    row pinned to 0) followed by D*(A-1) emission logits in the same
    convention. All probabilities stay strictly positive, so the chain is
    irreducible at every theta and the stationary initial law is smooth.
    """

    family = "logit"

    def __init__(self, n_states: int, n_symbols: int):
        if n_states < 1 or n_symbols < 1:
            raise DimensionMismatch("need at least one state and one symbol")
        self._D = n_states
        self._A = n_symbols

    @property
    def n_states(self) -> int:
        return self._D

    @property
    def n_symbols(self) -> int:
        return self._A

    @property
    def param_dim(self) -> int:
        D, A = self._D, self._A
        return D * (D - 1) + D * (A - 1)

    @property
    def param_names(self) -> list[str]:
        D, A = self._D, self._A
        names = [
            f"t{r}_{c}" for r in range(D) for c in range(D - 1)
        ]
        names += [f"e{r}_{c}" for r in range(D) for c in range(A - 1)]
        return names

    def _specs(self, theta):
        D, A = self._D, self._A
        trans, emis = [], []
        off = 0
        for r in range(D):
            g = np.arange(off, off + D - 1)
            trans.append((r, list(range(D)), g, theta[g]))
            off += D - 1
        for r in range(D):
            g = np.arange(off, off + A - 1)
            emis.append((r, list(range(A)), g, theta[g]))
            off += A - 1
        return trans, emis

    def tables(self, theta):
        theta = np.asarray(theta, dtype=float)
        trans, emis = self._specs(theta)
        q = self.param_dim
        P, *_ = _row_softmax_tables(self._D, self._D, q, 0, trans)
        E, *_ = _row_softmax_tables(self._D, self._A, q, 0, emis)
        return P, E

    def table_derivs(self, theta, order: int):
        theta = np.asarray(theta, dtype=float)
        q = self.param_dim
        D, A = self._D, self._A
        if order >= 2 and q * q * D * max(D, A) > _TABLE_CAP:
            raise SizeCap("derivative tables exceed the memory cap")
        trans, emis = self._specs(theta)
        P, dP, d2P, d3P = _row_softmax_tables(D, D, q, max(order, 1), trans)
        E, dE, d2E, d3E = _row_softmax_tables(D, A, q, max(order, 1), emis)
        return P, E, dP, dE, d2P, d2E, d3P, d3E

    def default_start(self, y) -> np.ndarray:
        return np.zeros(self.param_dim)


# ---------------------------------------------------------------------------
# memory-k embedding


@dataclass(frozen=True)
class KOrderEmbedding:
    """First-order representation of a k-step memory chain on l letters.

    States are the l^k tuples of the last k letters, encoded base-l with the
    most recent letter least significant. successors[u, b] is the state
    reached from u when letter b arrives; last[u] is the most recent letter
    of u.
    """

    l: int
    k: int
    n_states: int
    tuples: list[tuple[int, ...]]
    successors: np.ndarray
    last: np.ndarray

    def admissible(self, u: int, v: int) -> bool:
        """Whether v can follow u in one step (suffix/prefix overlap)."""
        return v in self.successors[u]


def embed_korder(l: int, k: int) -> KOrderEmbedding:
    if l < 2 or k < 1:
        raise DimensionMismatch("need l >= 2 letters and k >= 1 memory steps")
    n = l**k
    if n > 10_000:
        raise SizeCap(f"tuple state space of size {n} exceeds the cap")
    base = l ** (k - 1)
    tuples = []
    for u in range(n):
        digits = []
        v = u
        for _ in range(k):
            digits.append(v % l)
            v //= l
        tuples.append(tuple(reversed(digits)))
    successors = np.empty((n, l), dtype=np.int64)
    for u in range(n):
        for b in range(l):
            successors[u, b] = (u % base) * l + b
    last = np.arange(n, dtype=np.int64) % l
    return KOrderEmbedding(
        l=l, k=k, n_states=n, tuples=tuples, successors=successors, last=last
    )


class KOrderLogitHmm(FiniteGhmm):
    """Softmax parametrization of a k-step memory chain with emissions.

    Hidden tuples move along the embedding's successor structure; emission
    depends on the most recent letter only, so rows with equal last letter
    share emission parameters. theta stacks l^k * (l-1) transition logits
    (per tuple, last successor pinned) then l * (A-1) emission logits.
    """

    family = "korder"

    def __init__(self, l: int, k: int, n_symbols: int):
        self.embedding = embed_korder(l, k)
        if n_symbols < 1:
            raise DimensionMismatch("need at least one symbol")
        self._A = n_symbols

    @property
    def l(self) -> int:
        return self.embedding.l

    @property
    def k(self) -> int:
        return self.embedding.k

    @property
    def n_states(self) -> int:
        return self.embedding.n_states

    @property
    def n_symbols(self) -> int:
        return self._A

    @property
    def param_dim(self) -> int:
        emb = self.embedding
        return emb.n_states * (emb.l - 1) + emb.l * (self._A - 1)

    @property
    def param_names(self) -> list[str]:
        emb = self.embedding
        names = [
            f"t{u}_{b}" for u in range(emb.n_states) for b in range(emb.l - 1)
        ]
        names += [f"e{b}_{c}" for b in range(emb.l) for c in range(self._A - 1)]
        return names

    def _specs(self, theta):
        emb = self.embedding
        A = self._A
        trans, emis = [], []
        off = 0
        for u in range(emb.n_states):
            g = np.arange(off, off + emb.l - 1)
            trans.append((u, list(emb.successors[u]), g, theta[g]))
            off += emb.l - 1
        for u in range(emb.n_states):
            b = int(emb.last[u])
            g = np.arange(off + b * (A - 1), off + (b + 1) * (A - 1))
            emis.append((u, list(range(A)), g, theta[g]))
        return trans, emis

    def tables(self, theta):
        theta = np.asarray(theta, dtype=float)
        trans, emis = self._specs(theta)
        q = self.param_dim
        D = self.n_states
        P, *_ = _row_softmax_tables(D, D, q, 0, trans)
        E, *_ = _row_softmax_tables(D, self._A, q, 0, emis)
        return P, E

    def table_derivs(self, theta, order: int):
        theta = np.asarray(theta, dtype=float)
        q = self.param_dim
        D, A = self.n_states, self._A
        if order >= 2 and q * q * D * max(D, A) > _TABLE_CAP:
            raise SizeCap("derivative tables exceed the memory cap")
        trans, emis = self._specs(theta)
        P, dP, d2P, d3P = _row_softmax_tables(D, D, q, max(order, 1), trans)
        E, dE, d2E, d3E = _row_softmax_tables(D, A, q, max(order, 1), emis)
        return P, E, dP, dE, d2P, d2E, d3P, d3E

    def default_start(self, y) -> np.ndarray:
        return np.zeros(self.param_dim)
