"""Normalized forward filtering for general hidden Markov models.

The model object owns the actual recursion (finite state, conditionally
Gaussian, ...); this module fixes the shared contract: a filter state carries
normalized weights plus the accumulated log-normalizer, one observation is
absorbed per step, and the log-likelihood is the sum of per-step log
normalizers. Weights are kept on the simplex (or the model's analogue) at
every step so long sequences never underflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np


@dataclass(frozen=True)
class FilterState:
    """Filter state after absorbing observations y[0..t].

    weights: model-specific normalized state (a simplex vector for finite
        models, (mean, covariance) for linear state space models, a variance
        for GARCH).
    log_norm: accumulated log-likelihood of y[0..t].
    t: index of the last absorbed observation.
    """

    weights: Any
    log_norm: float
    t: int


def init_filter(model, theta, y0) -> FilterState:
    """State after the first observation; log_norm is its log-likelihood."""
    return model.init_filter(np.asarray(theta, dtype=float), y0)


def filter_step(model, theta, state: FilterState, y) -> FilterState:
    """Absorb one more observation."""
    return model.filter_step(np.asarray(theta, dtype=float), state, y)


def loglik_increments(model, theta, y) -> np.ndarray:
    """Per-observation increments l(y[0..t]) - l(y[0..t-1]), shape (n,).

    The t = 0 entry is the log-likelihood of y[0] alone. Errors raised by the
    model (zero total weight, non-finite values) carry the failing index.
    """
    theta = np.asarray(theta, dtype=float)
    return model.loglik_increments(theta, y)


def log_likelihood(model, theta, y) -> float:
    """Exact log-likelihood of the observation sequence under theta."""
    inc = loglik_increments(model, theta, y)
    return float(inc.sum())
