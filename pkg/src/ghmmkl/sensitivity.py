"""Analytic score and Hessian of the filter log-likelihood.

Parameter derivatives of the unnormalized filter weights are propagated
alongside the weights themselves as one bundle of vectors indexed by
multi-indices (graded lexicographic order, see multiindex). Every component
of the bundle is rescaled by the same per-step normalizer, the one computed
from the order-zero component, so the ratios that matter survive unchanged:
after scaling, summing the component for multi-index nu over the state space
yields D^nu L / L. From those the running score and Hessian follow as

    score_i = sum(V[e_i]),  H_ij = sum(V[e_i + e_j]) - score_i * score_j.

The same contract covers non-finite models (GARCH, linear state space);
there the bundle holds the model's own sufficient statistics and their
derivatives instead of weight vectors.

Finite-difference oracles for cross-checking the analytic path live here
too; they only ever touch the scalar log-likelihood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .core import log_likelihood
from .errors import AsymmetryWarning, StepTooSmall, UnsupportedOrder


@dataclass(frozen=True)
class DerivBundle:
    """Filter state with derivative components up to `order`.

    vectors: model-specific container; for finite models an array of shape
        (K, D) whose rows follow the graded-lex multi-index order with K =
        C(order + q, q).
    log_norm: accumulated log-likelihood of y[0..t].
    t: index of the last absorbed observation.
    order: highest derivative order carried.
    """

    vectors: Any
    log_norm: float
    t: int
    order: int


@dataclass(frozen=True)
class SensResult:
    """Output of one fused filtering-plus-derivatives pass.

    Increment arrays are per observation (first entry: the value for y[0]
    alone); totals are their sums. The Hessian is symmetrized; `asymmetry`
    records the largest absolute discrepancy between the raw matrix and its
    transpose before symmetrization.
    """

    order: int
    loglik_inc: np.ndarray
    loglik: float
    score_inc: np.ndarray | None = None
    score: np.ndarray | None = None
    hess_inc: np.ndarray | None = None
    hessian: np.ndarray | None = None
    asymmetry: float = 0.0


_ASYM_TOL = 1e-6


def init_sensitivity(model, theta, y0, order: int = 2) -> DerivBundle:
    """Derivative bundle after the first observation."""
    theta = np.asarray(theta, dtype=float)
    return model.init_sensitivity(theta, y0, order)


def sensitivity_step(model, theta, bundle: DerivBundle, y) -> DerivBundle:
    """Advance the bundle by one observation."""
    theta = np.asarray(theta, dtype=float)
    return model.sensitivity_step(theta, bundle, y)


def sensitivity_pass(model, theta, y, order: int = 2) -> SensResult:
    """One pass over y: per-step log-lik, score and Hessian increments."""
    if order < 1 or order > 2:
        raise UnsupportedOrder(f"fused pass supports orders 1 and 2, got {order}")
    theta = np.asarray(theta, dtype=float)
    res = model.sensitivity_pass(theta, y, order)
    if res.order >= 2 and res.asymmetry > _ASYM_TOL * max(
        1.0, float(np.abs(res.hessian).max())
    ):
        warnings.warn(
            f"Hessian asymmetry {res.asymmetry:.3e} above tolerance",
            AsymmetryWarning,
        )
    return res


def score(model, theta, y) -> np.ndarray:
    """Gradient of the log-likelihood at theta, shape (q,)."""
    return sensitivity_pass(model, theta, y, order=1).score


def hessian(model, theta, y) -> np.ndarray:
    """Symmetrized Hessian of the log-likelihood at theta, shape (q, q)."""
    return sensitivity_pass(model, theta, y, order=2).hessian


def _as_scalar_fn(model_or_fn, y) -> Callable[[np.ndarray], float]:
    if callable(model_or_fn):
        return model_or_fn
    if y is None:
        raise TypeError("observations are required when passing a model")
    return lambda th: log_likelihood(model_or_fn, th, y)


def _check_step(delta: float, base: float) -> None:
    if abs(delta) < 64.0 * np.finfo(float).eps * max(1.0, abs(base)):
        raise StepTooSmall(
            "finite-difference increment below 64x machine epsilon of the "
            "log-likelihood magnitude; increase the step"
        )


def fd_score(
    model_or_fn,
    theta,
    y=None,
    h: float = 1e-5,
    richardson: bool = False,
) -> np.ndarray:
    """Central-difference gradient oracle.

    Accepts a model plus observations or any scalar function of theta.
    With richardson=True the two-step extrapolation (4 D(h/2) - D(h)) / 3 is
    applied coordinatewise. Raises StepTooSmall when a difference would be
    pure rounding noise.
    """
    f = _as_scalar_fn(model_or_fn, y)
    theta = np.asarray(theta, dtype=float)
    f0 = f(theta)

    def central(step: float) -> np.ndarray:
        g = np.empty(theta.shape[0])
        for i in range(theta.shape[0]):
            tp = theta.copy()
            tm = theta.copy()
            tp[i] += step
            tm[i] -= step
            delta = f(tp) - f(tm)
            _check_step(delta, f0)
            g[i] = delta / (2.0 * step)
        return g

    if not richardson:
        return central(h)
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def fd_hessian(
    model_or_fn,
    theta,
    y=None,
    h: float = 1e-4,
    richardson: bool = False,
) -> np.ndarray:
    """Central-difference Hessian oracle; symmetric by construction."""
    f = _as_scalar_fn(model_or_fn, y)
    theta = np.asarray(theta, dtype=float)
    q = theta.shape[0]
    f0 = f(theta)

    def at(*pairs) -> float:
        t = theta.copy()
        for i, s in pairs:
            t[i] += s
        return f(t)

    def central(step: float) -> np.ndarray:
        H = np.empty((q, q))
        for i in range(q):
            delta = at((i, step)) - 2.0 * f0 + at((i, -step))
            _check_step(delta, f0)
            H[i, i] = delta / (step * step)
            for j in range(i + 1, q):
                dd = (
                    at((i, step), (j, step))
                    - at((i, step), (j, -step))
                    - at((i, -step), (j, step))
                    + at((i, -step), (j, -step))
                )
                _check_step(dd, f0)
                H[i, j] = H[j, i] = dd / (4.0 * step * step)
        return H

    if not richardson:
        return central(h)
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def symmetrize(H: np.ndarray) -> tuple[np.ndarray, float]:
    """(H + H^T)/2 and the max absolute asymmetry of the input."""
    asym = float(np.abs(H - np.swapaxes(H, -1, -2)).max()) if H.size else 0.0
    return 0.5 * (H + np.swapaxes(H, -1, -2)), asym
