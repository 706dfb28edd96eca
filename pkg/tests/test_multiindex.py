"""Multi-index order, counting, and Leibniz coefficient checks."""

from math import comb, factorial

import numpy as np

from ghmmkl import multiindex as mi


def test_graded_lex_order_q2_r2():
    assert mi.indices(2, 2) == [
        (0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0),
    ]


def test_indices_sorted_by_grade_then_lex():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = int(rng.integers(1, 5))
        r = int(rng.integers(0, 4))
        mis = mi.indices(q, r)
        assert len(set(mis)) == len(mis)
        degrees = [sum(nu) for nu in mis]
        assert degrees == sorted(degrees)
        for a, b in zip(mis, mis[1:]):
            if sum(a) == sum(b):
                assert a < b


def test_count_matches_binomial_formula():
    for q in range(0, 5):
        for r in range(0, 4):
            expected = factorial(r + q) // (factorial(r) * factorial(q))
            assert mi.count(q, r) == expected
            if q:
                assert len(mi.indices(q, r)) == expected


def test_bundle_closure_contains_all_lower_orders():
    # every kappa <= nu of a housed index is itself housed
    mis = mi.indices(3, 3)
    housed = set(mis)
    for nu in mis:
        for kappa in mi.sub_indices(nu):
            assert kappa in housed


def test_leibniz_coeff_is_product_of_binomials():
    nu = (2, 1, 3)
    kappa = (1, 0, 2)
    assert mi.leibniz_coeff(nu, kappa) == comb(2, 1) * comb(1, 0) * comb(3, 2)


def test_decompositions_cover_each_split_once():
    mis, out_idx, ker_idx, in_idx, coeff = mi.decompositions(2, 2)
    pos = {nu: i for i, nu in enumerate(mis)}
    seen = {}
    for m in range(len(out_idx)):
        nu = mis[out_idx[m]]
        kappa = mis[ker_idx[m]]
        mu = mis[in_idx[m]]
        assert mi.add(kappa, mu) == nu
        assert coeff[m] == mi.leibniz_coeff(nu, kappa)
        key = (nu, kappa)
        assert key not in seen
        seen[key] = True
    # term count per nu equals the number of componentwise splits
    for nu in mis:
        want = len(mi.sub_indices(nu))
        got = sum(1 for m in range(len(out_idx)) if out_idx[m] == pos[nu])
        assert got == want


def test_scalar_step_rows_binomial_triangle():
    assert mi.step_coefficient_rows(1, 2) == [[1], [1, 1], [1, 2, 1]]
    assert mi.step_coefficient_rows(1, 3) == [
        [1], [1, 1], [1, 2, 1], [1, 3, 3, 1],
    ]


def test_derivative_position_lookups():
    q = 3
    mis = mi.indices(q, 2)
    first = mi.first_order_positions(q, mis)
    for i in range(q):
        assert mis[first[i]] == mi.unit(q, i)
    second = mi.second_order_positions(q, mis)
    for i in range(q):
        for j in range(q):
            assert mis[second[i, j]] == mi.add(mi.unit(q, i), mi.unit(q, j))
    assert np.array_equal(second, second.T)
