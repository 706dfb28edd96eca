"""Tight per-step loops, jitted when numba is available.

Every kernel has a plain-python twin with identical semantics; the jitted
version is an optimization only. Kernels never raise: failure (zero or
non-finite normalizer) is reported as the 1-based index of the failing step
and converted to the proper exception by the caller. All kernels mutate
their output arrays in place.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


def _maybe_jit(f):
    if HAVE_NUMBA:
        return njit(cache=True, nogil=True)(f)
    return f


# ---------------------------------------------------------------------------
# finite-state filter


def _filter_seq_py(y, B, w, inc):
    """Steps 1..n-1 of the normalized forward recursion.

    y: (T,) symbol indices for the steps to absorb.
    B: (A, D, D) per-symbol step matrices B[a][s, x] = P[s, x] * E[x, a].
    w: (D,) normalized weights after y[0]; overwritten with final weights.
    inc: (T,) output log normalizers.
    Returns -1 on success, else 1 + the index of the failing step.
    """
    T = y.shape[0]
    D = w.shape[0]
    u = np.zeros(D)
    for t in range(T):
        a = y[t]
        for x in range(D):
            u[x] = 0.0
        for s in range(D):
            ws = w[s]
            if ws != 0.0:
                for x in range(D):
                    u[x] += ws * B[a, s, x]
        c = 0.0
        for x in range(D):
            c += u[x]
        if not (c > 0.0) or not np.isfinite(c):
            return t + 1
        for x in range(D):
            w[x] = u[x] / c
        inc[t] = np.log(c)
    return -1


filter_seq = _maybe_jit(_filter_seq_py)


def _sens_seq_py(
    y,
    KER,
    dec_out,
    dec_ker,
    dec_in,
    dec_coef,
    V,
    idx1,
    idx2,
    order,
    inc,
    score_inc,
    hess_inc,
    S_run,
    H_run,
):
    """Steps 1..n-1 of the derivative-bundle recursion.

    V: (K, D) bundle after y[0], graded-lex rows; overwritten in place.
    KER: (A, K, D, D) per-symbol kernels for each multi-index.
    dec_*: flattened Leibniz decomposition (out row, kernel row, in row,
        binomial coefficient).
    idx1: (q,) rows of the first-order components; idx2: (q, q) rows of the
        second-order components.
    S_run / H_run: running score and Hessian entering the loop; overwritten
        with final values. Outputs are per-step increments of the running
        quantities.
    Returns -1 on success, else 1 + the index of the failing step.
    """
    T = y.shape[0]
    K, D = V.shape
    q = idx1.shape[0]
    M = dec_out.shape[0]
    Vn = np.zeros((K, D))
    for t in range(T):
        a = y[t]
        for k in range(K):
            for x in range(D):
                Vn[k, x] = 0.0
        for m in range(M):
            o = dec_out[m]
            kk = dec_ker[m]
            ii = dec_in[m]
            cf = dec_coef[m]
            for x in range(D):
                acc = 0.0
                for s in range(D):
                    acc += V[ii, s] * KER[a, kk, s, x]
                Vn[o, x] += cf * acc
        c = 0.0
        for x in range(D):
            c += Vn[0, x]
        if not (c > 0.0) or not np.isfinite(c):
            return t + 1
        for k in range(K):
            for x in range(D):
                V[k, x] = Vn[k, x] / c
        inc[t] = np.log(c)
        for i in range(q):
            si = 0.0
            for x in range(D):
                si += V[idx1[i], x]
            score_inc[t, i] = si - S_run[i]
            S_run[i] = si
        if order >= 2:
            for i in range(q):
                for j in range(q):
                    mij = 0.0
                    for x in range(D):
                        mij += V[idx2[i, j], x]
                    hij = mij - S_run[i] * S_run[j]
                    hess_inc[t, i, j] = hij - H_run[i, j]
                    H_run[i, j] = hij
    return -1


sens_seq = _maybe_jit(_sens_seq_py)


def _finite_sim_py(Pcum, Ecum, x0, ux, uy, xs, ys):
    """Sample a hidden path and observations by inverse CDF.

    Pcum / Ecum: row-wise cumulative transition and emission tables.
    x0: initial hidden state; ux[0] is unused so that supplying x0 leaves
    the draw positions of every later variable unchanged.
    """
    n = ys.shape[0]
    D = Pcum.shape[1]
    A = Ecum.shape[1]
    x = x0
    for t in range(n):
        if t > 0:
            u = ux[t]
            s = 0
            while s < D - 1 and Pcum[x, s] < u:
                s += 1
            x = s
        v = uy[t]
        a = 0
        while a < A - 1 and Ecum[x, a] < v:
            a += 1
        xs[t] = x
        ys[t] = a
    return -1


finite_sim = _maybe_jit(_finite_sim_py)


# ---------------------------------------------------------------------------
# GARCH(1,1)


def _garch_sens_py(y, delta, alpha, beta, v0, dv0, d2v0, order, inc, score_inc, hess_inc):
    """Filter pass with conditional-variance derivatives up to order 2.

    theta order: (delta, alpha, beta). v0 and its derivatives seed the
    recursion; y[0] is scored against v0 directly.
    Returns -1 on success, else 1 + the index of the failing step (variance
    not strictly positive or not finite).
    """
    n = y.shape[0]
    LOG2PI = 1.8378770664093453
    v = v0
    dv = dv0.copy()
    d2v = d2v0.copy()
    for t in range(n):
        if t > 0:
            yp = y[t - 1]
            vn = delta + alpha * yp * yp + beta * v
            if order >= 2:
                for i in range(3):
                    for j in range(3):
                        d2v[i, j] = beta * d2v[i, j]
                for i in range(3):
                    d2v[i, 2] += dv[i]
                    d2v[2, i] += dv[i]
            d0 = 1.0 + beta * dv[0]
            d1 = yp * yp + beta * dv[1]
            d2_ = v + beta * dv[2]
            dv[0] = d0
            dv[1] = d1
            dv[2] = d2_
            v = vn
        if not (v > 0.0) or not np.isfinite(v):
            return t + 1
        yt = y[t]
        r = yt * yt / v
        inc[t] = -0.5 * (LOG2PI + np.log(v) + r)
        if order >= 1:
            g1 = (r - 1.0) / (2.0 * v)
            for i in range(3):
                score_inc[t, i] = g1 * dv[i]
        if order >= 2:
            ca = (2.0 * r - 1.0) / (v * v)
            cb = (1.0 - r) / v
            for i in range(3):
                for j in range(3):
                    hess_inc[t, i, j] = -0.5 * (ca * dv[i] * dv[j] + cb * d2v[i, j])
    return -1


garch_sens = _maybe_jit(_garch_sens_py)


def _garch_sim_py(z, delta, alpha, beta, v0, ys, vs):
    """Generate y[t] = sigma_t * z[t] with the variance recursion."""
    n = z.shape[0]
    v = v0
    for t in range(n):
        if t > 0:
            yp = ys[t - 1]
            v = delta + alpha * yp * yp + beta * v
        vs[t] = v
        ys[t] = np.sqrt(v) * z[t]
    return -1


garch_sim = _maybe_jit(_garch_sim_py)
