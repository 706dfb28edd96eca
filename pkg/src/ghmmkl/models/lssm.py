"""Linear state-space models with shared innovations, VARMA included.

Model: X_{n+1} = Phi X_n + F eps_n, Y_n = mu + H X_n + eps_n with
eps_n ~ N(0, Sigma) iid. The filter is the square-root-free recursion

    S_n = H P_n H^T,  K_n = (Phi P_n H^T) S_n^{-1},
    x_{n+1} = Phi x_n + K_n e_n,  e_n = (y_n - mu) - H x_n,
    P_{n+1} = Phi P_n Phi^T + H^T Sigma H - K_n S_n K_n^T,

started from x_1 = 0 and the solution of P = Phi P Phi^T + F F^T. The noise
feeds states and observations jointly, so after the first step the gain
locks onto the innovation structure: for autoregressive dynamics the
innovations and their covariance are exact from step 2 on (the first
increment carries an O(1) offset that vanishes from the per-observation
average).

Parameter sensitivities propagate tangents of every filter quantity. The
covariance side (P, S, K and their derivatives) is data independent and
converges geometrically, so a pass computes it once up to numerical
convergence and treats the remainder of the sequence with frozen gains;
the data side then reduces to linear recursions driven by the innovation
sequence. H and Sigma are constant in every family here; Phi, F and the
observation offset mu may depend on theta to second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..core import FilterState
from ..errors import (
    DimensionMismatch,
    NonFinite,
    NonPsdCovariance,
    NonstationaryParameters,
    RiccatiNoConvergence,
    UnsupportedOrder,
)
from ..montecarlo import long_run_average, stream
from ..sensitivity import DerivBundle, SensResult, symmetrize
from .base import GhmmModel

_LOG2PI = float(np.log(2.0 * np.pi))
_CONV_TOL = 1e-13
_RICCATI_TOL = 1e-12
_RICCATI_MAX = 100_000


@dataclass(frozen=True)
class LssmSpec:
    """Fixed system matrices: Phi (d,d), F (d,m), H (m,d), Sigma (m,m)."""

    Phi: np.ndarray
    F: np.ndarray
    H: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        Phi = np.atleast_2d(np.asarray(self.Phi, dtype=float))
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        d = Phi.shape[0]
        m = H.shape[0]
        if Phi.shape != (d, d):
            raise DimensionMismatch("Phi must be square")
        if F.shape != (d, m):
            raise DimensionMismatch(f"F must be ({d}, {m})")
        if H.shape != (m, d):
            raise DimensionMismatch(f"H must be ({m}, {d})")
        if Sigma.shape != (m, m):
            raise DimensionMismatch(f"Sigma must be ({m}, {m})")
        for name, M in (("Phi", Phi), ("F", F), ("H", H), ("Sigma", Sigma)):
            if not np.all(np.isfinite(M)):
                raise NonFinite(name)
        if np.abs(Sigma - Sigma.T).max() > 1e-10:
            raise NonPsdCovariance("Sigma must be symmetric")
        object.__setattr__(self, "Phi", Phi)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Sigma", Sigma)

    @property
    def state_dim(self) -> int:
        return self.Phi.shape[0]

    @property
    def obs_dim(self) -> int:
        return self.H.shape[0]


def _check_stable(Phi: np.ndarray) -> None:
    rho = np.abs(np.linalg.eigvals(Phi)).max() if Phi.size else 0.0
    if rho >= 1.0 - 1e-10:
        raise NonstationaryParameters(
            f"spectral radius {rho:.8f} of Phi must be < 1"
        )


def _lyap_solve(Phi: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve X = Phi X Phi^T + rhs via the Kronecker linear system."""
    d = Phi.shape[0]
    A = np.eye(d * d) - np.kron(Phi, Phi)
    X = np.linalg.solve(A, rhs.reshape(-1)).reshape(d, d)
    return 0.5 * (X + X.T)


def _psd_check(P: np.ndarray, t: int) -> np.ndarray:
    scale = max(1.0, float(np.abs(P).max()))
    w = np.linalg.eigvalsh(P)
    if w.min() < -1e-10 * scale:
        raise NonPsdCovariance(
            f"filter covariance lost positive semidefiniteness at step {t}"
        )
    if w.min() < 0.0:
        w2, V = np.linalg.eigh(P)
        P = (V * np.clip(w2, 0.0, None)) @ V.T
    return P


def _inv_logdet(S: np.ndarray, t: int):
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NonPsdCovariance(
            f"innovation covariance not positive definite at step {t}"
        ) from exc
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    Si = np.linalg.inv(S)
    return 0.5 * (Si + Si.T), logdet


# ---------------------------------------------------------------------------
# parametrized families


class LssmFamily:
    """Parametrization hook: theta -> system matrices with derivatives.

    build(theta, order) returns an LssmParts; H and Sigma must not depend
    on theta. mu is an optional observation offset with its derivatives.
    """

    family = "lssm"
    param_names: list[str] = []

    @property
    def param_dim(self) -> int:
        return len(self.param_names)

    def validate(self, theta: np.ndarray) -> np.ndarray:
        return theta

    def build(self, theta, order: int) -> "LssmParts":
        raise NotImplementedError

    def default_start(self, y) -> np.ndarray:
        return np.zeros(self.param_dim)


@dataclass
class LssmParts:
    spec: LssmSpec
    mu: np.ndarray                      # (m,)
    dPhi: np.ndarray | None = None      # (q, d, d)
    dF: np.ndarray | None = None        # (q, d, m)
    dmu: np.ndarray | None = None       # (q, m)
    d2Phi: np.ndarray | None = None     # (q, q, d, d)
    d2F: np.ndarray | None = None       # (q, q, d, m)
    d2mu: np.ndarray | None = None      # (q, q, m)

    def filled(self, q: int, order: int) -> "LssmParts":
        d = self.spec.state_dim
        m = self.spec.obs_dim
        if order >= 1:
            if self.dPhi is None:
                self.dPhi = np.zeros((q, d, d))
            if self.dF is None:
                self.dF = np.zeros((q, d, m))
            if self.dmu is None:
                self.dmu = np.zeros((q, m))
        if order >= 2:
            if self.d2Phi is None:
                self.d2Phi = np.zeros((q, q, d, d))
            if self.d2F is None:
                self.d2F = np.zeros((q, q, d, m))
            if self.d2mu is None:
                self.d2mu = np.zeros((q, q, m))
        return self


class FixedLssm(LssmFamily):
    """No free parameters; wraps a bare spec."""

    family = "lssm"
    param_names: list[str] = []

    def __init__(self, spec: LssmSpec, mu=None):
        self.spec = spec
        self.mu = (
            np.zeros(spec.obs_dim)
            if mu is None
            else np.asarray(mu, dtype=float).reshape(spec.obs_dim)
        )

    def build(self, theta, order: int) -> LssmParts:
        return LssmParts(spec=self.spec, mu=self.mu).filled(0, order)


class VarmaFamily(LssmFamily):
    """VARMA(p, q) in companion form; theta = vec(alpha_1..p, beta_1..q).

    Convention: Y_n + sum_j alpha_j Y_{n-j} = eps_n + sum_j beta_j eps_{n-j},
    so a scalar AR(1) with lag coefficient a has alpha_1 = -a. The state has
    h = max(p, q) blocks of size m; Phi carries -alpha_j down its first
    block column and identities on the superdiagonal, F stacks
    (beta_j - alpha_j), H reads the first block. The parametrization is
    linear, so second derivatives of the system matrices vanish.
    """

    family = "varma"

    def __init__(self, m: int, p: int, q: int, sigma=None):
        if m < 1 or p < 0 or q < 0:
            raise DimensionMismatch("need m >= 1 and p, q >= 0")
        self.m = m
        self.p = p
        self.q = q
        self.h = max(p, q)
        self.Sigma = (
            np.eye(m) if sigma is None else np.atleast_2d(np.asarray(sigma, float))
        )
        if self.Sigma.shape != (m, m):
            raise DimensionMismatch(f"sigma must be ({m}, {m})")
        names = []
        for j in range(1, p + 1):
            names += [f"ar{j}_{r}{s}" for r in range(m) for s in range(m)]
        for j in range(1, q + 1):
            names += [f"ma{j}_{r}{s}" for r in range(m) for s in range(m)]
        self.param_names = names

    def coeffs(self, theta):
        """(alphas, betas) as (p, m, m) and (q, m, m) stacks."""
        m, p, q = self.m, self.p, self.q
        theta = np.asarray(theta, dtype=float)
        alphas = theta[: p * m * m].reshape(p, m, m)
        betas = theta[p * m * m :].reshape(q, m, m)
        return alphas, betas

    def build(self, theta, order: int) -> LssmParts:
        m, p, q, h = self.m, self.p, self.q, self.h
        alphas, betas = self.coeffs(theta)
        d = h * m
        Phi = np.zeros((d, d))
        F = np.zeros((d, m))
        for j in range(h):
            a_j = alphas[j] if j < p else np.zeros((m, m))
            b_j = betas[j] if j < q else np.zeros((m, m))
            Phi[j * m : (j + 1) * m, 0:m] = -a_j
            if j + 1 < h:
                Phi[j * m : (j + 1) * m, (j + 1) * m : (j + 2) * m] = np.eye(m)
            F[j * m : (j + 1) * m, :] = b_j - a_j
        H = np.zeros((m, d))
        if h >= 1:
            H[:, 0:m] = np.eye(m)
        spec = LssmSpec(Phi=Phi, F=F, H=H, Sigma=self.Sigma)
        parts = LssmParts(spec=spec, mu=np.zeros(m))
        if order >= 1:
            nq = self.param_dim
            dPhi = np.zeros((nq, d, d))
            dF = np.zeros((nq, d, m))
            idx = 0
            for j in range(p):
                for r in range(m):
                    for s in range(m):
                        dPhi[idx, j * m + r, s] = -1.0
                        dF[idx, j * m + r, s] = -1.0
                        idx += 1
            for j in range(q):
                for r in range(m):
                    for s in range(m):
                        dF[idx, j * m + r, s] = 1.0
                        idx += 1
            parts.dPhi = dPhi
            parts.dF = dF
        return parts.filled(self.param_dim, order)


def varma_to_lssm(alphas, betas, sigma=None) -> LssmSpec:
    """Companion-form spec for given coefficient stacks.

    alphas: (p, m, m) (may be empty), betas: (q, m, m) (may be empty);
    scalars and (m, m) single matrices are promoted.
    """

    def promote(C):
        C = np.asarray(C, dtype=float)
        if C.ndim == 0:
            C = C.reshape(1, 1, 1)
        elif C.ndim == 2:
            C = C[None, :, :]
        elif C.ndim != 3:
            raise DimensionMismatch("coefficients must be (k, m, m) stacks")
        return C

    alphas = promote(alphas) if np.size(alphas) else np.zeros((0, 1, 1))
    betas = promote(betas) if np.size(betas) else np.zeros((0, 1, 1))
    m = alphas.shape[1] if alphas.shape[0] else betas.shape[1]
    fam = VarmaFamily(m=m, p=alphas.shape[0], q=betas.shape[0], sigma=sigma)
    theta = np.concatenate([alphas.reshape(-1), betas.reshape(-1)])
    return fam.build(theta, order=0).spec


class Ar1Family(LssmFamily):
    """Scalar AR(1): Y_n = a Y_{n-1} + eps_n with theta = (a,)."""

    family = "ar1"
    param_names = ["a"]

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0.0:
            raise NonPsdCovariance("sigma must be positive")
        self.sigma = float(sigma)

    def validate(self, theta):
        if not -1.0 < theta[0] < 1.0:
            raise NonstationaryParameters("|a| must be < 1")
        return theta

    def build(self, theta, order: int) -> LssmParts:
        a = float(theta[0])
        spec = LssmSpec(
            Phi=np.array([[a]]),
            F=np.array([[a]]),
            H=np.array([[1.0]]),
            Sigma=np.array([[self.sigma]]),
        )
        parts = LssmParts(spec=spec, mu=np.zeros(1))
        if order >= 1:
            parts.dPhi = np.ones((1, 1, 1))
            parts.dF = np.ones((1, 1, 1))
        return parts.filled(1, order)


class RnnMeanFamily(LssmFamily):
    """Linear recurrent mean: X_n = delta + alpha Y_{n-1} + beta X_{n-1},
    Y_n = X_n + eps_n.

    Substituting the observation equation gives the shared-innovation form
    with Phi = alpha + beta, F = alpha, H = 1 and observation offset
    mu = delta / (1 - alpha - beta). theta = (delta, alpha, beta).
    """

    family = "rnn-mean"
    param_names = ["delta", "alpha", "beta"]

    def __init__(self, sigma: float = 1.0):
        if not sigma > 0.0:
            raise NonPsdCovariance("sigma must be positive")
        self.sigma = float(sigma)

    def validate(self, theta):
        if abs(theta[1] + theta[2]) >= 1.0:
            raise NonstationaryParameters("|alpha + beta| must be < 1")
        return theta

    def build(self, theta, order: int) -> LssmParts:
        delta, alpha, beta = (float(v) for v in theta)
        s = 1.0 - alpha - beta
        spec = LssmSpec(
            Phi=np.array([[alpha + beta]]),
            F=np.array([[alpha]]),
            H=np.array([[1.0]]),
            Sigma=np.array([[self.sigma]]),
        )
        parts = LssmParts(spec=spec, mu=np.array([delta / s]))
        if order >= 1:
            parts.dPhi = np.array([0.0, 1.0, 1.0]).reshape(3, 1, 1)
            parts.dF = np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1)
            parts.dmu = np.array(
                [1.0 / s, delta / s**2, delta / s**2]
            ).reshape(3, 1)
        if order >= 2:
            d2mu = np.zeros((3, 3, 1))
            d2mu[0, 1, 0] = d2mu[1, 0, 0] = 1.0 / s**2
            d2mu[0, 2, 0] = d2mu[2, 0, 0] = 1.0 / s**2
            d2mu[1, 1, 0] = d2mu[1, 2, 0] = 2.0 * delta / s**3
            d2mu[2, 1, 0] = d2mu[2, 2, 0] = 2.0 * delta / s**3
            parts.d2mu = d2mu
        return parts.filled(3, order)

    def default_start(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.array([float(np.mean(y)) * 0.5, 0.2, 0.2])


# ---------------------------------------------------------------------------
# covariance-side propagation


def _p_init(parts: LssmParts, order: int):
    """P_1 and tangents from the Lyapunov equation P = Phi P Phi^T + F F^T."""
    spec = parts.spec
    Phi, F = spec.Phi, spec.F
    _check_stable(Phi)
    P = _lyap_solve(Phi, F @ F.T)
    P = _psd_check(P, 0)
    out = {"P": P}
    if order >= 1:
        q = parts.dPhi.shape[0]
        dP = np.empty((q, *P.shape))
        for a in range(q):
            rhs = (
                parts.dPhi[a] @ P @ Phi.T
                + Phi @ P @ parts.dPhi[a].T
                + parts.dF[a] @ F.T
                + F @ parts.dF[a].T
            )
            dP[a] = _lyap_solve(Phi, rhs)
        out["dP"] = dP
    if order >= 2:
        d2P = np.empty((q, q, *P.shape))
        for a in range(q):
            for b in range(q):
                rhs = (
                    parts.d2Phi[a, b] @ P @ Phi.T
                    + parts.dPhi[a] @ dP[b] @ Phi.T
                    + parts.dPhi[a] @ P @ parts.dPhi[b].T
                    + parts.dPhi[b] @ dP[a] @ Phi.T
                    + parts.dPhi[b] @ P @ parts.dPhi[a].T
                    + Phi @ dP[a] @ parts.dPhi[b].T
                    + Phi @ dP[b] @ parts.dPhi[a].T
                    + Phi @ P @ parts.d2Phi[a, b].T
                    + parts.d2F[a, b] @ F.T
                    + parts.dF[a] @ parts.dF[b].T
                    + parts.dF[b] @ parts.dF[a].T
                    + F @ parts.d2F[a, b].T
                )
                d2P[a, b] = _lyap_solve(Phi, rhs)
        out["d2P"] = d2P
    return out


def _p_step(parts: LssmParts, cov: dict, order: int, t: int) -> tuple[dict, dict]:
    """One covariance-side step: gain quantities at t and the next P block."""
    spec = parts.spec
    Phi, H, Sigma = spec.Phi, spec.H, spec.Sigma
    Qt = H.T @ Sigma @ H
    P = cov["P"]
    S = H @ P @ H.T
    Si, logdet = _inv_logdet(S, t)
    G = Phi @ P @ H.T
    K = G @ Si
    step = {"S": S, "Si": Si, "logdet": logdet, "K": K}
    Pn = Phi @ P @ Phi.T + Qt - K @ S @ K.T
    Pn = _psd_check(0.5 * (Pn + Pn.T), t + 1)
    nxt = {"P": Pn}
    if order >= 1:
        q = parts.dPhi.shape[0]
        dP = cov["dP"]
        dS = np.einsum("ij,ajk,lk->ail", H, dP, H)
        dSi = -np.einsum("ij,ajk,kl->ail", Si, dS, Si)
        dG = np.einsum("aij,jk,lk->ail", parts.dPhi, P, H) + np.einsum(
            "ij,ajk,lk->ail", Phi, dP, H
        )
        dK = dG @ Si + np.einsum("ij,ajk->aik", G, dSi)
        step.update({"dS": dS, "dSi": dSi, "dK": dK})
        dPn = (
            np.einsum("aij,jk,lk->ail", parts.dPhi, P, Phi)
            + np.einsum("ij,ajk,lk->ail", Phi, dP, Phi)
            + np.einsum("ij,jk,alk->ail", Phi, P, parts.dPhi)
            - np.einsum("aij,jk,lk->ail", dK, S, K)
            - np.einsum("ij,ajk,lk->ail", K, dS, K)
            - np.einsum("ij,jk,alk->ail", K, S, dK)
        )
        dPn = 0.5 * (dPn + np.swapaxes(dPn, 1, 2))
        nxt["dP"] = dPn
    if order >= 2:
        d2P = cov["d2P"]
        d2S = np.einsum("ij,abjk,lk->abil", H, d2P, H)
        d2Si = (
            np.einsum("ij,ajk,kl,blm,mn->abin", Si, dS, Si, dS, Si)
            + np.einsum("ij,bjk,kl,alm,mn->abin", Si, dS, Si, dS, Si)
            - np.einsum("ij,abjk,kl->abil", Si, d2S, Si)
        )
        d2G = (
            np.einsum("abij,jk,lk->abil", parts.d2Phi, P, H)
            + np.einsum("aij,bjk,lk->abil", parts.dPhi, dP, H)
            + np.einsum("bij,ajk,lk->abil", parts.dPhi, dP, H)
            + np.einsum("ij,abjk,lk->abil", Phi, d2P, H)
        )
        d2K = (
            d2G @ Si
            + np.einsum("aij,bjk->abik", dG, dSi)
            + np.einsum("bij,ajk->abik", dG, dSi)
            + np.einsum("ij,abjk->abik", G, d2Si)
        )
        step.update({"d2S": d2S, "d2Si": d2Si, "d2K": d2K})
        d2Pn = (
            np.einsum("abij,jk,lk->abil", parts.d2Phi, P, Phi)
            + np.einsum("aij,bjk,lk->abil", parts.dPhi, dP, Phi)
            + np.einsum("aij,jk,blk->abil", parts.dPhi, P, parts.dPhi)
            + np.einsum("bij,ajk,lk->abil", parts.dPhi, dP, Phi)
            + np.einsum("ij,abjk,lk->abil", Phi, d2P, Phi)
            + np.einsum("ij,ajk,blk->abil", Phi, dP, parts.dPhi)
            + np.einsum("bij,jk,alk->abil", parts.dPhi, P, parts.dPhi)
            + np.einsum("ij,bjk,alk->abil", Phi, dP, parts.dPhi)
            + np.einsum("ij,jk,ablk->abil", Phi, P, parts.d2Phi)
            - (
                np.einsum("abij,jk,lk->abil", d2K, S, K)
                + np.einsum("aij,bjk,lk->abil", dK, dS, K)
                + np.einsum("aij,jk,blk->abil", dK, S, dK)
                + np.einsum("bij,ajk,lk->abil", dK, dS, K)
                + np.einsum("ij,abjk,lk->abil", K, d2S, K)
                + np.einsum("ij,ajk,blk->abil", K, dS, dK)
                + np.einsum("bij,jk,alk->abil", dK, S, dK)
                + np.einsum("ij,bjk,alk->abil", K, dS, dK)
                + np.einsum("ij,jk,ablk->abil", K, S, d2K)
            )
        )
        d2Pn = 0.5 * (d2Pn + np.swapaxes(d2Pn, 2, 3))
        nxt["d2P"] = d2Pn
    return step, nxt


def _cov_converged(cov: dict, nxt: dict, order: int) -> bool:
    def close(A, B):
        return np.abs(A - B).max() <= _CONV_TOL * (1.0 + np.abs(A).max())

    if not close(cov["P"], nxt["P"]):
        return False
    if order >= 1 and not close(cov["dP"], nxt["dP"]):
        return False
    if order >= 2 and not close(cov["d2P"], nxt["d2P"]):
        return False
    return True


def _cov_prefix(parts: LssmParts, order: int, n: int):
    """Covariance-side sequence until convergence (at most n steps).

    Returns (steps, T_c): per-step gain dicts for t < T_c, after which the
    last entry repeats for the rest of the sequence.
    """
    cov = _p_init(parts, order)
    steps = []
    for t in range(n):
        step, nxt = _p_step(parts, cov, order, t)
        steps.append(step)
        if _cov_converged(cov, nxt, order):
            break
        cov = nxt
    return steps


# ---------------------------------------------------------------------------
# data side


def _obs_matrix(y, m: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        if m != 1:
            raise DimensionMismatch(f"observations must be (n, {m})")
        y = y[:, None]
    if y.ndim != 2 or y.shape[1] != m:
        raise DimensionMismatch(f"observations must be (n, {m})")
    if y.shape[0] < 1:
        raise DimensionMismatch("observations must be non-empty")
    if not np.all(np.isfinite(y)):
        raise NonFinite("observations")
    return y


def _linrec_py(A, U, z0, out):
    """out[t] = z_t for z_{t+1} = A z_t + U[t], z_0 = z0."""
    T = U.shape[0]
    z = z0.copy()
    for t in range(T):
        for i in range(z.shape[0]):
            out[t, i] = z[i]
        zn = A @ z + U[t]
        z = zn
    return 0


linrec = kernels._maybe_jit(_linrec_py)


def _run_linrec(A, U, z0):
    out = np.empty_like(U)
    linrec(
        np.ascontiguousarray(A),
        np.ascontiguousarray(U),
        np.ascontiguousarray(z0),
        out,
    )
    return out


class LssmModel(GhmmModel):
    """GHMM wrapper around a parametrized linear state-space family."""

    max_order = 2

    def __init__(self, family: LssmFamily):
        self.parametrization = family
        self.family = family.family

    @property
    def param_dim(self) -> int:
        return self.parametrization.param_dim

    @property
    def param_names(self) -> list[str]:
        return list(self.parametrization.param_names)

    def validate_theta(self, theta) -> np.ndarray:
        theta = super().validate_theta(theta)
        return np.asarray(self.parametrization.validate(theta), dtype=float)

    def _parts(self, theta, order: int) -> LssmParts:
        parts = self.parametrization.build(theta, order)
        _check_stable(parts.spec.Phi)
        return parts

    # -- plain filter ------------------------------------------------------

    def init_filter(self, theta, y0) -> FilterState:
        theta = self.validate_theta(theta)
        parts = self._parts(theta, 0)
        spec = parts.spec
        P = _p_init(parts, 0)["P"]
        x = np.zeros(spec.state_dim)
        step, nxt = _p_step(parts, {"P": P}, 0, 0)
        y0 = np.asarray(y0, dtype=float).reshape(spec.obs_dim)
        e = (y0 - parts.mu) - spec.H @ x
        inc = -0.5 * (
            spec.obs_dim * _LOG2PI + step["logdet"] + e @ step["Si"] @ e
        )
        xn = spec.Phi @ x + step["K"] @ e
        return FilterState(weights=(xn, nxt["P"]), log_norm=float(inc), t=0)

    def filter_step(self, theta, state: FilterState, y) -> FilterState:
        theta = self.validate_theta(theta)
        parts = self._parts(theta, 0)
        spec = parts.spec
        x, P = state.weights
        t = state.t + 1
        step, nxt = _p_step(parts, {"P": P}, 0, t)
        y = np.asarray(y, dtype=float).reshape(spec.obs_dim)
        e = (y - parts.mu) - spec.H @ x
        inc = -0.5 * (
            spec.obs_dim * _LOG2PI + step["logdet"] + e @ step["Si"] @ e
        )
        xn = spec.Phi @ x + step["K"] @ e
        return FilterState(
            weights=(xn, nxt["P"]), log_norm=state.log_norm + float(inc), t=t
        )

    # -- fused passes ------------------------------------------------------

    def loglik_increments(self, theta, y) -> np.ndarray:
        theta = self.validate_theta(theta)
        parts = self._parts(theta, 0)
        spec = parts.spec
        y = _obs_matrix(y, spec.obs_dim)
        n = y.shape[0]
        steps = _cov_prefix(parts, 0, n)
        Tc = len(steps)
        H, Phi = spec.H, spec.Phi
        inc = np.empty(n)
        # time-varying prefix
        x = np.zeros(spec.state_dim)
        yt = y - parts.mu[None, :]
        for t in range(min(Tc, n)):
            st = steps[t]
            e = yt[t] - H @ x
            inc[t] = -0.5 * (
                spec.obs_dim * _LOG2PI + st["logdet"] + e @ st["Si"] @ e
            )
            x = Phi @ x + st["K"] @ e
        if n > Tc:
            st = steps[-1]
            K, Si, logdet = st["K"], st["Si"], st["logdet"]
            A = Phi - K @ H
            U = yt[Tc:] @ K.T
            xs = _run_linrec(A, U, x)
            es = yt[Tc:] - xs @ H.T
            quad = np.einsum("ti,ij,tj->t", es, Si, es)
            inc[Tc:] = -0.5 * (spec.obs_dim * _LOG2PI + logdet + quad)
        return inc

    def sensitivity_pass(self, theta, y, order: int) -> SensResult:
        if order < 1 or order > 2:
            raise UnsupportedOrder("orders 1 and 2 are supported")
        theta = self.validate_theta(theta)
        q = self.param_dim
        parts = self._parts(theta, order)
        spec = parts.spec
        H, Phi = spec.H, spec.Phi
        m = spec.obs_dim
        d = spec.state_dim
        y = _obs_matrix(y, m)
        n = y.shape[0]
        yt = y - parts.mu[None, :]
        steps = _cov_prefix(parts, order, n)
        Tc = min(len(steps), n)

        inc = np.empty(n)
        score_inc = np.empty((n, q))
        hess_inc = np.empty((n, q, q)) if order >= 2 else None

        x = np.zeros(d)
        dx = np.zeros((q, d))
        d2x = np.zeros((q, q, d)) if order >= 2 else None
        for t in range(Tc):
            st = steps[t]
            x, dx, d2x = _x_step_full(
                parts, st, x, dx, d2x, yt[t], inc, score_inc, hess_inc, t, order
            )
        if n > Tc:
            self._steady_tail(
                parts,
                steps[-1],
                yt[Tc:],
                x,
                dx,
                d2x,
                inc[Tc:],
                score_inc[Tc:],
                hess_inc[Tc:] if order >= 2 else None,
                order,
            )
        loglik = float(inc.sum())
        score = score_inc.sum(axis=0)
        if order == 1:
            return SensResult(
                order=1,
                loglik_inc=inc,
                loglik=loglik,
                score_inc=score_inc,
                score=score,
            )
        hess_raw = hess_inc.sum(axis=0)
        hess, asym = symmetrize(hess_raw)
        hess_inc_sym, _ = symmetrize(hess_inc)
        return SensResult(
            order=2,
            loglik_inc=inc,
            loglik=loglik,
            score_inc=score_inc,
            score=score,
            hess_inc=hess_inc_sym,
            hessian=hess,
            asymmetry=asym,
        )

    def _steady_tail(
        self, parts, st, yt, x0, dx0, d2x0, inc, score_inc, hess_inc, order
    ):
        """Vectorized data side once the covariance side has converged."""
        spec = parts.spec
        H, Phi = spec.H, spec.Phi
        m = spec.obs_dim
        q = self.param_dim
        K, Si, logdet = st["K"], st["Si"], st["logdet"]
        dS, dSi, dK = st["dS"], st["dSi"], st["dK"]
        A = Phi - K @ H
        # state and innovation streams
        xs = _run_linrec(A, yt @ K.T, x0)
        es = yt - xs @ H.T
        rs = es @ Si.T
        quad = np.einsum("ti,ti->t", es, rs)
        inc[:] = -0.5 * (m * _LOG2PI + logdet + quad)
        # first-order streams
        des = np.empty((q, yt.shape[0], m))
        for a in range(q):
            U = (
                xs @ parts.dPhi[a].T
                + es @ dK[a].T
                - (K @ parts.dmu[a])[None, :]
            )
            dxa = _run_linrec(A, U, dx0[a])
            des[a] = -parts.dmu[a][None, :] - dxa @ H.T
            if order >= 2:
                if a == 0:
                    dxs = np.empty((q, yt.shape[0], xs.shape[1]))
                dxs[a] = dxa
        tr1 = -0.5 * np.einsum("ij,aji->a", Si, dS)
        score_inc[:] = (
            tr1[None, :]
            - np.einsum("ati,ti->ta", des, rs)
            + 0.5 * np.einsum("ti,aij,tj->ta", rs, dS, rs)
        )
        if order < 2:
            return
        d2S, d2Si, d2K = st["d2S"], st["d2Si"], st["d2K"]
        T = yt.shape[0]
        for a in range(q):
            for b in range(a, q):
                U = (
                    xs @ parts.d2Phi[a, b].T
                    + dxs[b] @ parts.dPhi[a].T
                    + dxs[a] @ parts.dPhi[b].T
                    + es @ d2K[a, b].T
                    + des[b] @ dK[a].T
                    + des[a] @ dK[b].T
                    - (K @ parts.d2mu[a, b])[None, :]
                )
                d2xab = _run_linrec(A, U, d2x0[a, b])
                d2e = -parts.d2mu[a, b][None, :] - d2xab @ H.T
                # dr_b = dSi_b e + Si de_b
                drb = es @ dSi[b].T + des[b] @ Si.T
                const = -0.5 * float(
                    np.einsum("ij,ji->", dSi[b], dS[a])
                    + np.einsum("ij,ji->", Si, d2S[a, b])
                )
                val = (
                    const
                    - np.einsum("ti,ti->t", d2e, rs)
                    - np.einsum("ti,ti->t", des[a], drb)
                    + 0.5
                    * (
                        np.einsum("ti,ij,tj->t", drb, dS[a], rs)
                        + np.einsum("ti,ij,tj->t", rs, d2S[a, b], rs)
                        + np.einsum("ti,ij,tj->t", rs, dS[a], drb)
                    )
                )
                hess_inc[:, a, b] = val
                if b != a:
                    hess_inc[:, b, a] = val

    # -- stepwise sensitivity ---------------------------------------------

    def init_sensitivity(self, theta, y0, order: int) -> DerivBundle:
        theta = self.validate_theta(theta)
        if order < 1 or order > 2:
            raise UnsupportedOrder("orders 1 and 2 are supported")
        parts = self._parts(theta, order)
        spec = parts.spec
        d = spec.state_dim
        q = self.param_dim
        cov = _p_init(parts, order)
        x = np.zeros(d)
        dx = np.zeros((q, d))
        d2x = np.zeros((q, q, d)) if order >= 2 else None
        y0 = np.asarray(y0, dtype=float).reshape(spec.obs_dim)
        st, nxt = _p_step(parts, cov, order, 0)
        inc = np.empty(1)
        score_inc = np.empty((1, q))
        hess_inc = np.empty((1, q, q)) if order >= 2 else None
        x, dx, d2x = _x_step_full(
            parts,
            st,
            x,
            dx,
            d2x,
            y0 - parts.mu,
            inc,
            score_inc,
            hess_inc,
            0,
            order,
        )
        state = {
            "x": x,
            "dx": dx,
            "d2x": d2x,
            "cov": nxt,
            "score": score_inc[0].copy(),
            "hess": hess_inc[0].copy() if order >= 2 else None,
        }
        return DerivBundle(
            vectors=state, log_norm=float(inc[0]), t=0, order=order
        )

    def sensitivity_step(self, theta, bundle: DerivBundle, y) -> DerivBundle:
        theta = self.validate_theta(theta)
        order = bundle.order
        parts = self._parts(theta, order)
        spec = parts.spec
        stt = bundle.vectors
        t = bundle.t + 1
        st, nxt = _p_step(parts, stt["cov"], order, t)
        y = np.asarray(y, dtype=float).reshape(spec.obs_dim)
        inc = np.empty(1)
        score_inc = np.empty((1, self.param_dim))
        hess_inc = np.empty((1, self.param_dim, self.param_dim)) if order >= 2 else None
        x, dx, d2x = _x_step_full(
            parts,
            st,
            stt["x"],
            stt["dx"],
            stt["d2x"],
            y - parts.mu,
            inc,
            score_inc,
            hess_inc,
            0,
            order,
        )
        state = {
            "x": x,
            "dx": dx,
            "d2x": d2x,
            "cov": nxt,
            "score": stt["score"] + score_inc[0],
            "hess": stt["hess"] + hess_inc[0] if order >= 2 else None,
        }
        return DerivBundle(
            vectors=state, log_norm=bundle.log_norm + float(inc[0]), t=t, order=order
        )

    def bundle_score(self, bundle: DerivBundle) -> np.ndarray:
        return bundle.vectors["score"]

    def bundle_hessian(self, bundle: DerivBundle) -> np.ndarray:
        if bundle.order < 2:
            raise UnsupportedOrder("Hessian requires an order-2 bundle")
        return bundle.vectors["hess"]

    # -- simulation --------------------------------------------------------

    def simulate_arrays(self, theta, n: int, rng, x0=None):
        theta = self.validate_theta(theta)
        parts = self._parts(theta, 0)
        spec = parts.spec
        d, m = spec.state_dim, spec.obs_dim
        w, V = np.linalg.eigh(spec.Sigma)
        if w.min() < -1e-10 * max(1.0, w.max()):
            raise NonPsdCovariance("Sigma must be positive semidefinite")
        L = V * np.sqrt(np.clip(w, 0.0, None))
        eps = rng.standard_normal((n, m)) @ L.T
        if x0 is None:
            Pg = _lyap_solve(spec.Phi, spec.F @ spec.Sigma @ spec.F.T)
            w, V = np.linalg.eigh(Pg)
            x = (V * np.sqrt(np.clip(w, 0.0, None))) @ rng.standard_normal(d)
        else:
            x = np.asarray(x0, dtype=float).reshape(d)
        xs = np.empty((n, d))
        ys = np.empty((n, m))
        for t in range(n):
            xs[t] = x
            ys[t] = parts.mu + spec.H @ x + eps[t]
            x = spec.Phi @ x + spec.F @ eps[t]
        if m == 1:
            return ys[:, 0], xs
        return ys, xs

    def default_start(self, y) -> np.ndarray:
        return self.parametrization.default_start(y)


def _x_step_full(parts, st, x, dx, d2x, yt_t, inc, score_inc, hess_inc, t, order):
    """One data-side step with full derivative propagation (small-n path)."""
    spec = parts.spec
    H, Phi = spec.H, spec.Phi
    m = spec.obs_dim
    q = dx.shape[0]
    K, Si, logdet = st["K"], st["Si"], st["logdet"]
    e = yt_t - H @ x
    r = Si @ e
    inc[t] = -0.5 * (m * _LOG2PI + logdet + e @ r)
    dS, dSi, dK = st["dS"], st["dSi"], st["dK"]
    de = -parts.dmu - dx @ H.T
    score_inc[t] = (
        -0.5 * np.einsum("ij,aji->a", Si, dS)
        - de @ r
        + 0.5 * np.einsum("i,aij,j->a", r, dS, r)
    )
    if order >= 2:
        d2S, d2Si, d2K = st["d2S"], st["d2Si"], st["d2K"]
        d2e = -parts.d2mu - d2x @ H.T
        dr = e @ dSi.transpose(0, 2, 1) + de @ Si.T          # (q, m)
        hv = (
            -0.5 * np.einsum("bij,aji->ab", dSi, dS)
            - 0.5 * np.einsum("ij,abji->ab", Si, d2S)
            - d2e @ r
            - np.einsum("ai,bi->ab", de, dr)
            + 0.5
            * (
                np.einsum("bi,aij,j->ab", dr, dS, r)
                + np.einsum("i,abij,j->ab", r, d2S, r)
                + np.einsum("i,aij,bj->ab", r, dS, dr)
            )
        )
        hess_inc[t] = hv
    # state updates
    xn = Phi @ x + K @ e
    dxn = (
        np.einsum("aij,j->ai", parts.dPhi, x)
        + dx @ Phi.T
        + np.einsum("aij,j->ai", dK, e)
        + de @ K.T
    )
    d2xn = None
    if order >= 2:
        d2xn = (
            np.einsum("abij,j->abi", parts.d2Phi, x)
            + np.einsum("aij,bj->abi", parts.dPhi, dx)
            + np.einsum("bij,aj->abi", parts.dPhi, dx)
            + d2x @ Phi.T
            + np.einsum("abij,j->abi", st["d2K"], e)
            + np.einsum("aij,bj->abi", dK, de)
            + np.einsum("bij,aj->abi", dK, de)
            + d2e @ K.T
        )
    return xn, dxn, d2xn


# ---------------------------------------------------------------------------
# plain Kalman interface and steady-state Fisher


@dataclass(frozen=True)
class KalmanResult:
    loglik: float
    increments: np.ndarray
    innovations: np.ndarray        # (n, m)
    innovation_covs: np.ndarray    # (n, m, m)
    gains: np.ndarray              # (n, d, m)
    steady_index: int              # first step using frozen covariances


def kalman_filter(spec: LssmSpec, y, mu=None) -> KalmanResult:
    """Run the filter on fixed system matrices and expose its internals."""
    fam = FixedLssm(spec, mu=mu)
    parts = fam.build(np.zeros(0), 0)
    _check_stable(spec.Phi)
    yM = _obs_matrix(y, spec.obs_dim)
    n = yM.shape[0]
    steps = _cov_prefix(parts, 0, n)
    Tc = min(len(steps), n)
    H, Phi = spec.H, spec.Phi
    yt = yM - parts.mu[None, :]
    inc = np.empty(n)
    innovations = np.empty((n, spec.obs_dim))
    covs = np.empty((n, spec.obs_dim, spec.obs_dim))
    gains = np.empty((n, spec.state_dim, spec.obs_dim))
    x = np.zeros(spec.state_dim)
    for t in range(Tc):
        st = steps[t]
        e = yt[t] - H @ x
        innovations[t] = e
        covs[t] = st["S"]
        gains[t] = st["K"]
        inc[t] = -0.5 * (
            spec.obs_dim * _LOG2PI + st["logdet"] + e @ st["Si"] @ e
        )
        x = Phi @ x + st["K"] @ e
    if n > Tc:
        st = steps[-1]
        K, Si, logdet = st["K"], st["Si"], st["logdet"]
        A = Phi - K @ H
        xs = _run_linrec(A, yt[Tc:] @ K.T, x)
        es = yt[Tc:] - xs @ H.T
        innovations[Tc:] = es
        covs[Tc:] = st["S"][None, :, :]
        gains[Tc:] = K[None, :, :]
        quad = np.einsum("ti,ij,tj->t", es, Si, es)
        inc[Tc:] = -0.5 * (spec.obs_dim * _LOG2PI + logdet + quad)
    return KalmanResult(
        loglik=float(inc.sum()),
        increments=inc,
        innovations=innovations,
        innovation_covs=covs,
        gains=gains,
        steady_index=Tc,
    )


def steady_gain(parts: LssmParts, order: int):
    """Iterate the covariance side to its fixed point; derivatives ride along."""
    cov = _p_init(parts, order)
    for it in range(_RICCATI_MAX):
        step, nxt = _p_step(parts, cov, order, it)
        def close(A, B, tol):
            return np.abs(A - B).max() <= tol * (1.0 + np.abs(A).max())
        done = close(cov["P"], nxt["P"], _RICCATI_TOL)
        if order >= 1:
            done = done and close(cov["dP"], nxt["dP"], _RICCATI_TOL)
        if order >= 2:
            done = done and close(cov["d2P"], nxt["d2P"], _RICCATI_TOL)
        cov = nxt
        if done:
            return step, cov
    raise RiccatiNoConvergence(
        f"covariance recursion did not settle in {_RICCATI_MAX} iterations"
    )


def lssm_fisher(model: LssmModel, theta, n: int, seed: int, burn_in=None):
    """Monte Carlo Fisher information from steady-state innovation tangents.

    Simulates under theta, runs the frozen-gain filter, propagates the
    first-order innovation tangents, and averages
    d eps^T Sigma^{-1} d eps over the post-burn-in window. Off-diagonal
    entries use the polarization of the same quadratic form.
    """
    from ..info import FisherEstimate

    theta = model.validate_theta(theta)
    q = model.param_dim
    parts = model._parts(theta, 1)
    spec = parts.spec
    H, Phi = spec.H, spec.Phi
    m = spec.obs_dim
    st, cov = steady_gain(parts, 1)
    K, Si = st["K"], st["Si"]
    dK = st["dK"]
    Sig_i = np.linalg.inv(spec.Sigma)
    rng = stream(seed)
    y, _ = model.simulate_arrays(theta, n, rng)
    yt = _obs_matrix(y, m) - parts.mu[None, :]
    A = Phi - K @ H
    xs = _run_linrec(A, yt @ K.T, np.zeros(spec.state_dim))
    es = yt - xs @ H.T
    des = np.empty((q, n, m))
    for a in range(q):
        U = xs @ parts.dPhi[a].T + es @ dK[a].T - (K @ parts.dmu[a])[None, :]
        dxa = _run_linrec(A, U, np.zeros(spec.state_dim))
        des[a] = -parts.dmu[a][None, :] - dxa @ H.T
    prods = np.einsum("ati,ij,btj->tab", des, Sig_i, des)
    mean, se = long_run_average(prods, burn_in=burn_in)
    mat = 0.5 * (mean + mean.T)
    return FisherEstimate(
        matrix=mat,
        se_proxy=se,
        n=n,
        seed=seed,
        method="lssm-steady",
        burn_in=n // 10 if burn_in is None else int(burn_in),
    )


def linear_rnn(delta, alpha, beta, variant: str = "variance", sigma: float = 1.0):
    """(model, theta) for the linear recurrent families.

    variant="variance": the recurrence drives a conditional variance
    (squared observations feed back), which is the GARCH(1,1) likelihood.
    variant="mean": the recurrence drives a conditional mean observed in
    Gaussian noise, handled as a linear state-space model.
    """
    theta = np.array([float(delta), float(alpha), float(beta)])
    if variant == "variance":
        from .garch import Garch11

        model = Garch11()
    elif variant == "mean":
        model = LssmModel(RnnMeanFamily(sigma=sigma))
    else:
        raise ValueError("variant must be 'variance' or 'mean'")
    model.validate_theta(theta)
    return model, theta
