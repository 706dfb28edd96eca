"""Derivatives of finite exponential-family distributions.

Every parametrized probability table in this package whose rows have the form
p(x) = exp(s(x)) / Z with s depending linearly on the parameters gets its
analytic derivatives from the central-moment formulas below. With
c_a(x) = ds(x)/dtheta_a - E[ds/dtheta_a] the derivatives are

    dp/da       = p c_a
    d2p/dadb    = p (c_a c_b - K_ab)
    d3p/dadbdc  = p (c_a c_b c_c - c_a K_bc - c_b K_ac - c_c K_ab - k_abc)

where K is the covariance and k the third central moment of the coordinate
scores under p. All tables are small (finite supports), so everything is
dense numpy.
"""

from __future__ import annotations

import numpy as np


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max()
    w = np.exp(z)
    return w / w.sum()


def composite_derivative_tables(scores, ds, d2s=None, d3s=None, order: int = 1):
    """Softmax derivatives when the scores themselves have curvature.

    scores: (S,); ds: (q, S) first score derivatives; d2s: (q, q, S) and
    d3s: (q, q, q, S) or None when zero. With A the log-normalizer and
    u_x = s_x - A, the probability derivatives are p du, p(du du + d2u),
    and the matching third-order product rule, where each d^r u centers
    d^r s by the p-average d^r A. Reduces to the linear-score formulas
    when d2s and d3s vanish.
    """
    p = softmax(scores)
    if order < 1:
        return p, None, None, None
    q = ds.shape[0]
    S = p.shape[0]
    du = ds - (ds @ p)[:, None]
    dp = p[None, :] * du
    if order < 2:
        return p, dp, None, None
    if d2s is None:
        d2s = np.zeros((q, q, S))
    d2A = np.einsum("ax,bx,x->ab", du, du, p) + d2s @ p
    d2u = d2s - d2A[:, :, None]
    d2p = p[None, None, :] * (du[:, None, :] * du[None, :, :] + d2u)
    if order < 3:
        return p, dp, d2p, None
    if d3s is None:
        d3s = np.zeros((q, q, q, S))
    d3A = (
        np.einsum("ax,bx,cx,x->abc", du, du, du, p)
        + np.einsum("cx,abx,x->abc", du, d2u, p)
        + np.einsum("bx,acx,x->abc", du, d2u, p)
        + np.einsum("ax,bcx,x->abc", du, d2u, p)
        + d3s @ p
    )
    d3u = d3s - d3A[:, :, :, None]
    d3p = p[None, None, None, :] * (
        du[:, None, None, :] * du[None, :, None, :] * du[None, None, :, :]
        + du[:, None, None, :] * d2u[None, :, :, :]
        + du[None, :, None, :] * d2u[:, None, :, :]
        + du[None, None, :, :] * d2u[:, :, None, :]
        + d3u
    )
    return p, dp, d2p, d3p


def derivative_tables(scores: np.ndarray, coeffs: np.ndarray, order: int):
    """Probability vector and its parameter derivatives up to `order`.

    scores: (S,) unnormalized log-probabilities over the support.
    coeffs: (q, S) with coeffs[a, x] = d scores[x] / d theta_a.
    Returns (p, dp, d2p, d3p) with trailing entries None beyond `order`;
    shapes (S,), (q, S), (q, q, S), (q, q, q, S).
    """
    p = softmax(scores)
    if order < 1:
        return p, None, None, None
    q = coeffs.shape[0]
    mu = coeffs @ p                                   # (q,)
    c = coeffs - mu[:, None]                          # (q, S)
    dp = p[None, :] * c
    if order < 2:
        return p, dp, None, None
    K = (c * p[None, :]) @ c.T                        # (q, q) covariance
    d2p = p[None, None, :] * (c[:, None, :] * c[None, :, :] - K[:, :, None])
    if order < 3:
        return p, dp, d2p, None
    cc = c[:, None, :] * c[None, :, :]                # (q, q, S)
    k3 = np.einsum("abx,cx,x->abc", cc, c, p)         # third central moments
    d3p = (
        cc[:, :, None, :] * c[None, None, :, :]
        - c[:, None, None, :] * K[None, :, :, None]
        - c[None, :, None, :] * K[:, None, :, None]
        - c[None, None, :, :] * K[:, :, None, None]
        - k3[:, :, :, None]
    ) * p[None, None, None, :]
    return p, dp, d2p, d3p
