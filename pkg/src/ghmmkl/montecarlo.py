"""Simulation streams, long-run averages, and small-case enumeration.

Randomness contract: every consumer derives its generator through
`stream(master_seed, *key)`, a counter-based generator split by key. Equal
(seed, key) pairs give bit-identical draws regardless of what other streams
were consumed before, which is what makes common-random-number coupling and
re-runs reproducible.

The enumeration helpers are deliberately naive (full sums over sequence or
path space) so they can serve as independent oracles for the filter and the
Monte Carlo estimators on small cases.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import TooLarge, TooShort

_ENUM_CAP = 1_000_000


def stream(master_seed: int, *key) -> np.random.Generator:
    """Independent random stream for (master_seed, key).

    Splitting is by SeedSequence spawn keys over a counter-based bit
    generator, so streams never overlap and adding new keys never perturbs
    existing ones.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Trajectory:
    """Simulated observations with provenance.

    y: observations, shape (n,) or (n, m).
    x: hidden path when the model exposes one (hidden states, variances,
       state vectors), else None.
    """

    y: np.ndarray
    x: np.ndarray | None
    theta: np.ndarray
    n: int
    seed: int | None
    family: str


def simulate(model, theta, n: int, seed=None, rng=None, x0=None, key=()) -> Trajectory:
    """Draw n observations under theta.

    Exactly one of seed / rng must be given; with a seed the generator is
    stream(seed, *key). x0 fixes the initial hidden state where the model
    supports it; the default is a stationary start.
    """
    if n < 1:
        raise TooShort("need n >= 1 observations")
    if (seed is None) == (rng is None):
        raise ValueError("pass exactly one of seed or rng")
    if rng is None:
        rng = stream(seed, *key)
    theta = model.validate_theta(theta)
    y, x = model.simulate_arrays(theta, n, rng, x0=x0)
    return Trajectory(
        y=y, x=x, theta=theta, n=n, seed=seed, family=model.family
    )


def window(n: int, burn_in=None) -> tuple[int, int]:
    """Post-burn-in index window [lo, n); default burn-in is n // 10."""
    if burn_in is None:
        burn_in = n // 10
    burn_in = int(burn_in)
    if burn_in < 0 or burn_in >= n:
        raise TooShort(f"burn-in {burn_in} leaves no observations out of {n}")
    return burn_in, n


def long_run_average(values: np.ndarray, burn_in=None, n_batches: int = 20):
    """Mean over the post-burn-in window with a batch-means standard error.

    values has time along axis 0; the mean uses the full window, the error
    proxy splits the window into n_batches equal batches (trailing remainder
    dropped) and scales the spread of batch means. Requires at least one
    point per batch.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    lo, hi = window(n, burn_in)
    w = values[lo:hi]
    m = w.shape[0]
    if m < n_batches:
        raise TooShort(f"window of {m} points cannot fill {n_batches} batches")
    mean = w.mean(axis=0)
    b = m // n_batches
    batches = w[: n_batches * b].reshape(n_batches, b, *w.shape[1:]).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / np.sqrt(n_batches)
    return mean, se


def _check_enum_size(n_symbols: int, n: int) -> int:
    total = n_symbols ** (n + 1)
    if total > _ENUM_CAP:
        raise TooLarge(
            f"{total} sequences exceed the enumeration cap of {_ENUM_CAP}"
        )
    return total


def all_sequences(n_symbols: int, n: int) -> np.ndarray:
    """All symbol sequences y[0..n], shape (n_symbols**(n+1), n+1)."""
    total = _check_enum_size(n_symbols, n)
    seqs = np.array(list(product(range(n_symbols), repeat=n + 1)), dtype=np.int64)
    return seqs.reshape(total, n + 1)


def sequence_likelihoods(model, theta, n: int):
    """Likelihood of every observation sequence of length n + 1.

    Returns (seqs, L) with L[i] the exact likelihood of row i, computed by
    the tensorized sum-product over hidden states (no normalization; lengths
    are capped, so no underflow). The likelihoods of all sequences sum to 1.
    """
    theta = model.validate_theta(theta)
    P, E = model.tables(theta)
    pi = model.initial_law(theta)
    seqs = all_sequences(model.n_symbols, n)
    W = pi[None, :] * E[:, seqs[:, 0]].T          # (S, D)
    for t in range(1, n + 1):
        W = (W @ P) * E[:, seqs[:, t]].T
    return seqs, W.sum(axis=1)


def path_sum_log_likelihood(model, theta, y) -> float:
    """Log-likelihood by literal enumeration of all hidden paths.

    Sums pi(x0) prod P[x_{t-1}, x_t] prod E[x_t, y_t] over every hidden
    path, with no filtering and no normalization. Exponential cost; this is
    the independence oracle for the forward recursion.
    """
    theta = model.validate_theta(theta)
    P, E = model.tables(theta)
    pi = model.initial_law(theta)
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0] - 1
    D = model.n_states
    if D ** (n + 1) > _ENUM_CAP:
        raise TooLarge("hidden path space exceeds the enumeration cap")
    paths = np.array(list(product(range(D), repeat=n + 1)), dtype=np.int64)
    prob = pi[paths[:, 0]] * E[paths[:, 0], y[0]]
    for t in range(1, n + 1):
        prob = prob * P[paths[:, t - 1], paths[:, t]] * E[paths[:, t], y[t]]
    total = prob.sum()
    if total <= 0.0:
        return -np.inf
    return float(np.log(total))


def enumerate_expectation(model, theta, functional, n: int) -> float:
    """Exact expectation of functional(y[0..n]) under the model's law.

    functional receives each sequence as an int array of length n + 1 and
    must return a float; sequences with zero probability contribute nothing
    (their functional is never evaluated, so log-likelihood functionals are
    safe).
    """
    seqs, L = sequence_likelihoods(model, theta, n)
    total = 0.0
    for i in range(seqs.shape[0]):
        if L[i] > 0.0:
            total += L[i] * float(functional(seqs[i]))
    return total
