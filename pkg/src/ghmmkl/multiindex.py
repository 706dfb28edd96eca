"""Multi-index bookkeeping for derivative bundles.

A bundle over q parameters at order r stores one weight vector per multi-index
nu with |nu| <= r, ordered graded-lexicographically: ascending total degree,
and plain ascending lexicographic order inside each degree. For q=2, r=2 the
order is (0,0), (0,1), (1,0), (0,2), (1,1), (2,0). This ordering is part of
the package contract; the Leibniz step table below is expressed in it.
"""

from __future__ import annotations

from itertools import combinations_with_replacement
from math import comb

import numpy as np


def indices(q: int, r: int) -> list[tuple[int, ...]]:
    """All multi-indices over q parameters with total degree <= r, graded-lex."""
    if q == 0:
        return [()]
    out = []
    for degree in range(r + 1):
        grade = set()
        for combo in combinations_with_replacement(range(q), degree):
            nu = [0] * q
            for i in combo:
                nu[i] += 1
            grade.add(tuple(nu))
        out.extend(sorted(grade))
    return out


def count(q: int, r: int) -> int:
    # C(r+q, q): all monomials of degree <= r in q variables
    return comb(r + q, q)


def unit(q: int, i: int) -> tuple[int, ...]:
    nu = [0] * q
    nu[i] = 1
    return tuple(nu)


def add(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(x + y for x, y in zip(a, b))


def sub_indices(nu: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All multi-indices kappa <= nu componentwise (the Leibniz splits)."""
    out = [()]
    for n_i in nu:
        out = [k + (v,) for k in out for v in range(n_i + 1)]
    return out


def leibniz_coeff(nu: tuple[int, ...], kappa: tuple[int, ...]) -> int:
    """Product of per-coordinate binomials C(nu_i, kappa_i)."""
    c = 1
    for n_i, k_i in zip(nu, kappa):
        c *= comb(n_i, k_i)
    return c


def decompositions(q: int, r: int):
    """Flat Leibniz step table for the bundle recursion.

    Returns (mis, out_idx, ker_idx, in_idx, coeff) where mis is the graded-lex
    index list and, for each term position m, the step contributes

        V_new[out_idx[m]] += coeff[m] * V_old[in_idx[m]] @ kernel[ker_idx[m]]

    i.e. the new vector for nu sums over all splits nu = kappa + mu of the
    kappa-derivative one-step kernel applied to the mu entry of the old
    bundle, weighted by the multinomial coefficient C(nu; kappa).
    """
    mis = indices(q, r)
    pos = {nu: i for i, nu in enumerate(mis)}
    out_idx, ker_idx, in_idx, coeff = [], [], [], []
    for nu in mis:
        for kappa in mis:
            if all(k <= n for k, n in zip(kappa, nu)):
                mu = tuple(n - k for n, k in zip(nu, kappa))
                out_idx.append(pos[nu])
                ker_idx.append(pos[kappa])
                in_idx.append(pos[mu])
                coeff.append(leibniz_coeff(nu, kappa))
    return (
        mis,
        np.asarray(out_idx, dtype=np.int64),
        np.asarray(ker_idx, dtype=np.int64),
        np.asarray(in_idx, dtype=np.int64),
        np.asarray(coeff, dtype=np.float64),
    )


def first_order_positions(q: int, mis: list[tuple[int, ...]]) -> np.ndarray:
    pos = {nu: i for i, nu in enumerate(mis)}
    return np.asarray([pos[unit(q, i)] for i in range(q)], dtype=np.int64)


def second_order_positions(q: int, mis: list[tuple[int, ...]]) -> np.ndarray:
    pos = {nu: i for i, nu in enumerate(mis)}
    out = np.empty((q, q), dtype=np.int64)
    for i in range(q):
        for j in range(q):
            out[i, j] = pos[add(unit(q, i), unit(q, j))]
    return out


def step_coefficient_rows(q: int, r: int) -> list[list[int]]:
    """Rows of Leibniz coefficients per target degree for the scalar case.

    For q=1 this reproduces the lower-triangular step-matrix pattern:
    r=2 gives [[1], [1, 1], [1, 2, 1]].
    """
    mis, out_idx, ker_idx, in_idx, coeff = decompositions(q, r)
    rows = []
    for t, nu in enumerate(mis):
        row = [int(coeff[m]) for m in range(len(out_idx)) if out_idx[m] == t]
        rows.append(row)
    return rows
