"""Likelihood geometry for general hidden Markov models.

Normalized forward filtering with analytic score/Hessian propagation,
Monte Carlo Fisher and KL-rate estimators linked by the quadratic
approximation, Cramer-Rao bound reporting, and AIC order/state selection,
for discrete HMMs, GARCH(1,1)/linear RNN, VARMA state-space models, and
small temporal restricted Boltzmann machines.
"""

from . import errors
from .core import (
    FilterState,
    filter_step,
    init_filter,
    log_likelihood,
    loglik_increments,
)
from .errors import GhmmError
from .expfam import composite_derivative_tables, derivative_tables, softmax
from .inference import (
    AicReport,
    AicRow,
    FitResult,
    aic_order_select,
    aic_state_select,
    embed_korder,
    lr_stat,
    mle_fit,
    order_penalty,
    state_penalty,
)
from .info import (
    FisherEstimate,
    KlEstimate,
    crlb_report,
    fisher_hessian_estimate,
    fisher_score_estimate,
    kl_additivity_check,
    kl_estimate,
    kl_exact_small,
    kl_sweep,
    quadratic_check,
)
from .montecarlo import (
    Trajectory,
    enumerate_expectation,
    long_run_average,
    simulate,
    stream,
)
from .sensitivity import (
    DerivBundle,
    SensResult,
    fd_hessian,
    fd_score,
    hessian,
    score,
    sensitivity_pass,
    symmetrize,
)
from .models import (
    Ar1Family,
    FiniteGhmm,
    FixedTableHmm,
    Garch11,
    GhmmModel,
    KOrderEmbedding,
    KOrderLogitHmm,
    LogitHmm,
    LssmModel,
    LssmSpec,
    RnnMeanFamily,
    Tilt3,
    TrbmHmm,
    TrbmSpec,
    VarmaFamily,
    discrete_hmm,
    garch11,
    garch_fisher_series,
    kalman_filter,
    linear_rnn,
    lssm_fisher,
    steady_gain,
    tilt3,
    trbm_to_hmm,
    varma_to_lssm,
)

__version__ = "0.1.0"

__all__ = [
    "AicReport",
    "AicRow",
    "Ar1Family",
    "DerivBundle",
    "FilterState",
    "FiniteGhmm",
    "FisherEstimate",
    "FitResult",
    "FixedTableHmm",
    "Garch11",
    "GhmmError",
    "GhmmModel",
    "KOrderEmbedding",
    "KOrderLogitHmm",
    "KlEstimate",
    "LogitHmm",
    "LssmModel",
    "LssmSpec",
    "RnnMeanFamily",
    "SensResult",
    "Tilt3",
    "Trajectory",
    "TrbmHmm",
    "TrbmSpec",
    "VarmaFamily",
    "aic_order_select",
    "aic_state_select",
    "composite_derivative_tables",
    "crlb_report",
    "derivative_tables",
    "discrete_hmm",
    "embed_korder",
    "enumerate_expectation",
    "errors",
    "fd_hessian",
    "fd_score",
    "filter_step",
    "fisher_hessian_estimate",
    "fisher_score_estimate",
    "garch11",
    "garch_fisher_series",
    "hessian",
    "init_filter",
    "kalman_filter",
    "kl_additivity_check",
    "kl_estimate",
    "kl_exact_small",
    "kl_sweep",
    "linear_rnn",
    "log_likelihood",
    "loglik_increments",
    "long_run_average",
    "lr_stat",
    "lssm_fisher",
    "mle_fit",
    "order_penalty",
    "quadratic_check",
    "score",
    "sensitivity_pass",
    "simulate",
    "softmax",
    "state_penalty",
    "steady_gain",
    "stream",
    "symmetrize",
    "tilt3",
    "trbm_to_hmm",
    "varma_to_lssm",
]
