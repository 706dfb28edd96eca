"""Maximum-likelihood fitting, likelihood ratios, and AIC selection.

Fitting maximizes the filter log-likelihood with analytic scores from the
sensitivity pass. The optimizer is a quasi-Newton ascent (inverse-BFGS
update, Armijo backtracking) run in unconstrained coordinates: simplex
rows are handled by softmax parametrization inside the models themselves,
bounded scalars by tanh maps, positive scales by log maps. Multi-start
fitting jitters the initial point with seeded streams and keeps the best
completed run.

Order and state-count selection fit nested candidate chains and compare
AIC values -2 log L + 2 * penalty, where the penalty counts the free
transition probabilities added by the candidate. Larger candidates warm
start from an exact lift of the smaller fit (suffix-sharing for longer
memory, state cloning for more states), which keeps fitted log-likelihood
monotone across rows up to optimizer tolerance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryHit, DimensionMismatch, GhmmError, NestingViolation
from .models.discrete import (
    KOrderEmbedding,
    KOrderLogitHmm,
    LogitHmm,
    embed_korder,
)
from .montecarlo import stream

__all__ = [
    "AicReport",
    "AicRow",
    "BoxReparam",
    "FitResult",
    "GarchReparam",
    "IdentityReparam",
    "KOrderEmbedding",
    "KOrderLogitHmm",
    "aic_order_select",
    "aic_state_select",
    "embed_korder",
    "lr_stat",
    "mle_fit",
    "order_penalty",
    "reparam_for",
    "state_penalty",
]

_ETA_BOX = 30.0       # admissible box in working coordinates
_C1 = 1e-4            # Armijo slope fraction
_MAX_HALVINGS = 30
_MAX_DOUBLINGS = 8
_CURV_EPS = 1e-10     # relative curvature floor for the BFGS update
_STEP_CAP = 2.0       # sup-norm cap on the first trial step
_AIC_TIE = 1e-9


# ---------------------------------------------------------------------------
# constraint reparametrizations


class IdentityReparam:
    """No-op map for families that are already unconstrained."""

    def theta(self, eta):
        return np.asarray(eta, dtype=float).copy()

    def eta(self, theta):
        return np.asarray(theta, dtype=float).copy()

    def grad(self, eta, dtheta):
        return np.asarray(dtheta, dtype=float).copy()


class BoxReparam:
    """Coordinatewise theta = half_width * tanh(eta) for open boxes."""

    def __init__(self, half_width):
        self.half_width = np.atleast_1d(np.asarray(half_width, dtype=float))

    def theta(self, eta):
        return self.half_width * np.tanh(eta)

    def eta(self, theta):
        r = np.asarray(theta, dtype=float) / self.half_width
        return np.arctanh(np.clip(r, -1 + 1e-12, 1 - 1e-12))

    def grad(self, eta, dtheta):
        return np.asarray(dtheta, dtype=float) * self.half_width / np.cosh(eta) ** 2


class GarchReparam:
    """(delta, alpha, beta) with delta > 0 and alpha + beta < 1.

    delta = exp(eta0); (alpha, beta) are two softmax shares against a
    pinned remainder, so alpha, beta > 0 and alpha + beta < 1 hold for
    every eta.
    """

    def theta(self, eta):
        e1, e2 = np.exp(eta[1]), np.exp(eta[2])
        z = 1.0 + e1 + e2
        return np.array([math.exp(eta[0]), e1 / z, e2 / z])

    def eta(self, theta):
        d, a, b = np.asarray(theta, dtype=float)
        rest = max(1.0 - a - b, 1e-12)
        return np.array(
            [math.log(d), math.log(max(a, 1e-12) / rest), math.log(max(b, 1e-12) / rest)]
        )

    def grad(self, eta, dtheta):
        d, a, b = self.theta(eta)
        return np.array(
            [
                dtheta[0] * d,
                dtheta[1] * a * (1 - a) - dtheta[2] * a * b,
                -dtheta[1] * a * b + dtheta[2] * b * (1 - b),
            ]
        )


_REPARAMS = {
    "tilt3": lambda: BoxReparam(0.5),
    "ar1": lambda: BoxReparam(1.0),
    "garch11": lambda: GarchReparam(),
}


def reparam_for(model):
    """Working-coordinate map for a model family.

    A model may carry its own map as a `reparam` attribute; known bounded
    families get theirs from the registry; everything else is fitted in
    its native coordinates.
    """
    rp = getattr(model, "reparam", None)
    if rp is not None:
        return rp
    factory = _REPARAMS.get(getattr(model, "family", ""))
    return factory() if factory is not None else IdentityReparam()


# ---------------------------------------------------------------------------
# quasi-Newton ascent


@dataclass
class FitResult:
    """Fitted parameter with optimizer diagnostics.

    grad_norm is the sup norm of the working-coordinate gradient at the
    returned point; converged means it met the tolerance. restart names the
    start that produced the winner, n_evals counts log-likelihood
    evaluations across all starts.
    """

    theta: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    grad_norm: float
    n_evals: int
    restart: int
    eta: np.ndarray


def _try_eval(fun, eta):
    """Evaluate inside a line search; failures reject the trial point."""
    try:
        f, g = fun(eta)
    except (GhmmError, FloatingPointError, np.linalg.LinAlgError):
        return False, 0.0, None
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return False, 0.0, None
    return True, f, g


def _bfgs_run(fun, eta0, max_iter, tol):
    """Single ascent run.

    Returns (eta, f, g, iterations, evals, converged, boundary). A step
    that would leave the +-30 box ends the run at the last admissible
    iterate with boundary=True: the likelihood is still climbing toward a
    degenerate configuration there, so the value is a running supremum,
    not a stationary point.
    """
    eta = np.asarray(eta0, dtype=float).copy()
    n = eta.size
    f, g = fun(eta)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise GhmmError("objective not finite at the starting point")
    evals = 1
    H = np.eye(n)
    it = 0
    while it < max_iter:
        if np.abs(g).max() <= tol:
            return eta, f, g, it, evals, True, False
        moved = False
        # objective changes below this are rounding noise; near the optimum
        # the search then accepts full steps on gradient decrease alone
        eps_f = 32.0 * np.finfo(float).eps * (1.0 + abs(f))
        for attempt in range(2):
            if attempt == 1:
                H = np.eye(n)
            d = H @ g
            slope = float(d @ g)
            if slope <= 0.0:
                continue
            dinf = np.abs(d).max()
            a = min(1.0, _STEP_CAP / dinf)
            halved = False
            for _ in range(_MAX_HALVINGS):
                trial = eta + a * d
                ok, ft, gt = _try_eval(fun, trial)
                evals += 1
                if ok and ft >= f + _C1 * a * slope:
                    moved = True
                    break
                if (
                    ok
                    and a * slope <= eps_f
                    and ft >= f - eps_f
                    and abs(float(gt @ d)) <= 0.5 * slope
                ):
                    moved = True
                    break
                a *= 0.5
                halved = True
            if moved and not halved:
                # forward tracking: a strong directional derivative at the
                # accepted point means the quadratic model underestimates
                # the step, so grow it while the gain keeps compounding
                for _ in range(_MAX_DOUBLINGS):
                    if float(gt @ d) <= 0.5 * slope:
                        break
                    a2 = 2.0 * a
                    trial2 = eta + a2 * d
                    if np.abs(trial2).max() > _ETA_BOX:
                        break
                    ok2, f2, g2 = _try_eval(fun, trial2)
                    evals += 1
                    if ok2 and f2 >= f + _C1 * a2 * slope and f2 > ft:
                        a, trial, ft, gt = a2, trial2, f2, g2
                    else:
                        break
            if moved:
                break
        if not moved:
            return eta, f, g, it, evals, bool(np.abs(g).max() <= tol), False
        if np.abs(trial).max() > _ETA_BOX:
            return eta, f, g, it, evals, False, True
        s = a * d
        yv = g - gt                      # gradient drop along the step
        eta, f, g = trial, ft, gt
        it += 1
        sy = float(s @ yv)
        if sy > _CURV_EPS * float(np.linalg.norm(s) * np.linalg.norm(yv)):
            rho = 1.0 / sy
            Hy = H @ yv
            yHy = float(yv @ Hy)
            ss = np.outer(s, s)
            H = (
                H
                - rho * (np.outer(s, Hy) + np.outer(Hy, s))
                + (rho * rho * yHy + rho) * ss
            )
    return eta, f, g, it, evals, bool(np.abs(g).max() <= tol), False


def mle_fit(
    model,
    y,
    theta_init=None,
    *,
    max_iter: int = 500,
    tol: float = 1e-6,
    n_restarts: int = 5,
    jitter: float = 0.5,
    seed: int = 0,
    reparam=None,
    max_workers=None,
) -> FitResult:
    """Maximize the log-likelihood of `model` on observations `y`.

    Runs `n_restarts` ascent runs: one from theta_init (the family's
    default start when omitted) and the rest from seeded jitters of it in
    working coordinates. The best run by log-likelihood wins, earlier
    start on ties. If the winner stopped at the edge of the +-30 working
    box, the likelihood supremum is degenerate and BoundaryHit is raised,
    carrying the last admissible point. Plain non-convergence is a flag on
    the result, never an exception.
    """
    q = model.param_dim
    if q == 0:
        th = np.zeros(0)
        ll = float(model.loglik_increments(th, y).sum())
        return FitResult(
            theta=th, loglik=ll, converged=True, iterations=0,
            grad_norm=0.0, n_evals=1, restart=0, eta=np.zeros(0),
        )
    rp = reparam if reparam is not None else reparam_for(model)
    th0 = model.default_start(y) if theta_init is None else np.asarray(theta_init, dtype=float)
    eta0 = np.asarray(rp.eta(th0), dtype=float)
    if eta0.shape != (q,):
        raise DimensionMismatch("reparametrized start has the wrong length")
    starts = [eta0]
    for r in range(1, max(1, n_restarts)):
        starts.append(eta0 + jitter * stream(seed, r).standard_normal(q))

    def fun(eta):
        res = model.sensitivity_pass(rp.theta(eta), y, 1)
        return res.loglik, rp.grad(eta, res.score)

    def run(args):
        r, e0 = args
        try:
            return _bfgs_run(fun, e0, max_iter, tol)
        except (GhmmError, FloatingPointError, np.linalg.LinAlgError):
            if r == 0:
                raise          # the requested start itself is unusable
            return None

    if len(starts) == 1:
        outs = [run((0, starts[0]))]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            outs = list(ex.map(run, enumerate(starts)))
    best, best_r = None, -1
    total_evals = 0
    for r, out in enumerate(outs):
        if out is None:
            continue
        total_evals += out[4]
        if best is None or out[1] > best[1]:
            best, best_r = out, r
    eta, f, g, it, _, conv, boundary = best
    if boundary:
        j = int(np.abs(eta).argmax())
        raise BoundaryHit(
            f"likelihood still climbing at the working-coordinate box "
            f"(coordinate {j} near the edge)",
            theta=rp.theta(eta),
            loglik=float(f),
            iterations=int(it),
        )
    return FitResult(
        theta=rp.theta(eta),
        loglik=float(f),
        converged=bool(conv),
        iterations=int(it),
        grad_norm=float(np.abs(g).max()),
        n_evals=int(total_evals),
        restart=int(best_r),
        eta=eta,
    )


# ---------------------------------------------------------------------------
# likelihood ratios


def _loglik_of(fit) -> float:
    if hasattr(fit, "loglik"):
        return float(fit.loglik)
    return float(fit)


def lr_stat(fit_full, fit_restricted) -> float:
    """2 * (full - restricted) fitted log-likelihood, clamped at zero.

    Accepts FitResults or bare log-likelihood values. A restricted fit
    beating the full one by more than 1e-4 raises NestingViolation; smaller
    violations are optimizer noise and clamp to 0.
    """
    stat = 2.0 * (_loglik_of(fit_full) - _loglik_of(fit_restricted))
    if stat < -1e-4:
        raise NestingViolation(
            f"restricted log-likelihood exceeds full by {-stat / 2:.3g}"
        )
    return stat if stat >= 0.0 else 0.0


# ---------------------------------------------------------------------------
# AIC selection


def order_penalty(l: int, k: int) -> int:
    """Free transition probabilities added at memory k: l^(k+1) - l^k."""
    return l ** (k + 1) - l**k


def state_penalty(k: int, m: int) -> int:
    """Free transition probabilities of a k-state memory-m chain."""
    return k ** (m + 1) - k**m


@dataclass
class AicRow:
    k: int
    loglik: float
    penalty: int
    aic: float
    p: int
    converged: bool
    iters: int
    grad_norm: float


@dataclass
class AicReport:
    """Per-candidate fits plus the AIC-selected candidate."""

    kind: str
    rows: list
    selected: int


def _select(rows) -> int:
    pool = [r for r in rows if r.converged and np.isfinite(r.aic)]
    if not pool:
        pool = [r for r in rows if np.isfinite(r.aic)]
    if not pool:
        raise GhmmError("no candidate fit produced a finite AIC value")
    best = min(r.aic for r in pool)
    return min(r.k for r in pool if r.aic <= best + _AIC_TIE)


def _lift_order(l: int, k_small: int, n_symbols: int, theta_small) -> np.ndarray:
    """Embed a memory-k fit into the memory-(k+1) parameter space.

    Transition logits of a long tuple copy those of its most recent
    k-letter suffix; emission logits carry over. The lifted parameter
    defines the same observable law, so the bigger fit starts at the
    smaller fit's log-likelihood.
    """
    n_small = l**k_small
    n_big = l ** (k_small + 1)
    w = l - 1
    big = KOrderLogitHmm(l, k_small + 1, n_symbols)
    out = np.empty(big.param_dim)
    for u in range(n_big):
        src = u % n_small
        out[u * w : (u + 1) * w] = theta_small[src * w : (src + 1) * w]
    out[n_big * w :] = theta_small[n_small * w :]
    return out


def _lift_states(k_small: int, n_symbols: int, theta_small) -> np.ndarray:
    """Split the last state of a first-order k-state fit into two clones.

    Incoming probability splits evenly between the clones and both clones
    copy the source row and emission, so the observable law is unchanged
    and the lifted start reproduces the smaller fit's log-likelihood.
    """
    A = n_symbols
    ln2 = math.log(2.0)
    w_old, w_new = k_small - 1, k_small
    out = np.empty((k_small + 1) * w_new + (k_small + 1) * (A - 1))
    for u in range(k_small + 1):
        src = min(u, k_small - 1)
        row = theta_small[src * w_old : (src + 1) * w_old]
        out[u * w_new : u * w_new + w_old] = row + ln2
        out[u * w_new + w_old] = 0.0
    t_end = (k_small + 1) * w_new
    e_old = theta_small[k_small * w_old :]
    for b in range(k_small + 1):
        src = min(b, k_small - 1)
        out[t_end + b * (A - 1) : t_end + (b + 1) * (A - 1)] = e_old[
            src * (A - 1) : (src + 1) * (A - 1)
        ]
    return out


def _fit_row(model, y, k, penalty, init, fit_kwargs):
    try:
        fit = mle_fit(model, y, init, **fit_kwargs)
    except BoundaryHit as exc:
        ll = math.nan if exc.loglik is None else float(exc.loglik)
        row = AicRow(
            k=k, loglik=ll, penalty=penalty,
            aic=-2.0 * ll + 2.0 * penalty,
            p=model.param_dim, converged=False,
            iters=int(exc.iterations), grad_norm=math.nan,
        )
        return row, None
    row = AicRow(
        k=k,
        loglik=fit.loglik,
        penalty=penalty,
        aic=-2.0 * fit.loglik + 2.0 * penalty,
        p=model.param_dim,
        converged=fit.converged,
        iters=fit.iterations,
        grad_norm=fit.grad_norm,
    )
    return row, fit


def _state_model(k: int, m: int, n_symbols: int):
    if k == 1:
        return LogitHmm(1, n_symbols)
    return KOrderLogitHmm(k, m, n_symbols)


def aic_order_select(
    y,
    l: int,
    k_max: int,
    n_symbols=None,
    *,
    family="korder",
    seed: int = 0,
    n_restarts: int = 5,
    max_iter: int = 500,
    tol: float = 1e-6,
    max_workers=None,
) -> AicReport:
    """Select the memory length of an l-letter hidden chain by AIC.

    Fits memory k = 1..k_max; candidate k+1 warm starts from the exact
    lift of the k fit, so fitted log-likelihoods are nondecreasing up to
    optimizer tolerance. Rows are reported for every candidate; selection
    considers non-converged rows only when no row converged, and ties
    within 1e-9 go to the smaller k.
    """
    if k_max < 1:
        raise DimensionMismatch("k_max must be at least 1")
    y = np.asarray(y, dtype=np.int64)
    A = int(n_symbols) if n_symbols is not None else int(y.max()) + 1
    factory = family if callable(family) else None
    if factory is None and family != "korder":
        raise DimensionMismatch(f"unknown fitting family {family!r}")
    kwargs = dict(
        seed=seed, n_restarts=n_restarts, max_iter=max_iter, tol=tol,
        max_workers=max_workers,
    )
    rows, prev = [], None
    for k in range(1, k_max + 1):
        model = factory(l, k, A) if factory else KOrderLogitHmm(l, k, A)
        init = None
        if prev is not None and factory is None:
            init = _lift_order(l, k - 1, A, prev.theta)
        row, fit = _fit_row(model, y, k, order_penalty(l, k), init, kwargs)
        rows.append(row)
        if fit is not None:
            prev = fit
    return AicReport(kind="order", rows=rows, selected=_select(rows))


def aic_state_select(
    y,
    m: int,
    k_range,
    n_symbols=None,
    *,
    family="korder",
    seed: int = 0,
    n_restarts: int = 5,
    max_iter: int = 500,
    tol: float = 1e-6,
    max_workers=None,
) -> AicReport:
    """Select the hidden-state count of a memory-m chain by AIC.

    Candidates k from `k_range` are fitted with penalty k^(m+1) - k^m; the
    single-state candidate is the degenerate independent model with zero
    penalty. For first-order chains, consecutive candidates warm start
    from an exact state-cloning lift of the previous fit.
    """
    y = np.asarray(y, dtype=np.int64)
    A = int(n_symbols) if n_symbols is not None else int(y.max()) + 1
    ks = [int(k) for k in k_range]
    if not ks or min(ks) < 1:
        raise DimensionMismatch("candidate state counts must be >= 1")
    factory = family if callable(family) else None
    if factory is None and family != "korder":
        raise DimensionMismatch(f"unknown fitting family {family!r}")
    kwargs = dict(
        seed=seed, n_restarts=n_restarts, max_iter=max_iter, tol=tol,
        max_workers=max_workers,
    )
    rows = []
    prev, prev_k = None, None
    for k in ks:
        model = factory(k, m, A) if factory else _state_model(k, m, A)
        init = None
        if (
            factory is None
            and m == 1
            and prev is not None
            and prev_k == k - 1
        ):
            init = _lift_states(k - 1, A, prev.theta)
        row, fit = _fit_row(model, y, k, state_penalty(k, m), init, kwargs)
        rows.append(row)
        if fit is not None:
            prev, prev_k = fit, k
    return AicReport(kind="states", rows=rows, selected=_select(rows))
