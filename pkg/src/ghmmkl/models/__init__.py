"""Model families: finite HMMs, GARCH(1,1), linear state space, TRBM."""

from .base import FiniteGhmm, GhmmModel, stationary_law, stationary_with_derivs
from .discrete import (
    FixedTableHmm,
    KOrderEmbedding,
    KOrderLogitHmm,
    LogitHmm,
    Tilt3,
    discrete_hmm,
    embed_korder,
    tilt3,
)
from .garch import (
    Garch11,
    garch11,
    garch_fisher_series,
    garch_fisher_series_mc,
    garch_stationary_mean,
)
from .lssm import (
    Ar1Family,
    FixedLssm,
    KalmanResult,
    LssmFamily,
    LssmModel,
    LssmSpec,
    RnnMeanFamily,
    VarmaFamily,
    kalman_filter,
    linear_rnn,
    lssm_fisher,
    steady_gain,
    varma_to_lssm,
)
from .trbm import TrbmHmm, TrbmSpec, bit_patterns, joint_conditional_table, trbm_to_hmm

__all__ = [
    "Ar1Family",
    "FiniteGhmm",
    "FixedLssm",
    "FixedTableHmm",
    "Garch11",
    "GhmmModel",
    "KOrderEmbedding",
    "KOrderLogitHmm",
    "KalmanResult",
    "LogitHmm",
    "LssmFamily",
    "LssmModel",
    "LssmSpec",
    "RnnMeanFamily",
    "Tilt3",
    "TrbmHmm",
    "TrbmSpec",
    "VarmaFamily",
    "bit_patterns",
    "discrete_hmm",
    "embed_korder",
    "garch11",
    "garch_fisher_series",
    "garch_fisher_series_mc",
    "garch_stationary_mean",
    "joint_conditional_table",
    "kalman_filter",
    "linear_rnn",
    "lssm_fisher",
    "steady_gain",
    "stationary_law",
    "stationary_with_derivs",
    "tilt3",
    "trbm_to_hmm",
    "varma_to_lssm",
]
