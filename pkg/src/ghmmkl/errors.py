"""Error and warning taxonomy shared across the package.

Numerical failures raise GhmmError subclasses so the CLI can map them to a
dedicated exit status; diagnostic conditions that must not abort a run are
warnings or result-record flags instead.
"""


class GhmmError(Exception):
    """Base class for all numerical/model failures raised by this package."""


class AllZeroWeights(GhmmError):
    """Every hidden state assigns zero probability to an observation."""

    def __init__(self, t, msg=None):
        self.t = t
        super().__init__(msg or f"filter weights all zero at step {t} (observation out of support)")


class NonFinite(GhmmError):
    """A model evaluator or filter quantity became NaN or infinite."""

    def __init__(self, what, t=None):
        self.t = t
        at = "" if t is None else f" at step {t}"
        super().__init__(f"non-finite value in {what}{at}")


class UnsupportedOrder(GhmmError):
    """Derivative order not available for the requested model family."""


class StepTooSmall(GhmmError):
    """Finite-difference step below the resolvable rounding floor."""


class ZeroLikelihoodUnderTheta0(GhmmError):
    """The comparison parameter assigns zero likelihood to the trajectory.

    kl_estimate catches this internally and returns a tagged infinity so
    sweeps can continue.
    """

    def __init__(self, t):
        self.t = t
        super().__init__(f"zero likelihood under theta0 at step {t}; KL is +inf")


class TooLarge(GhmmError):
    """Enumeration bound exceeded."""


class TooShort(GhmmError):
    """Stream shorter than burn-in plus the batch layout requires."""


class InvalidStochasticMatrix(GhmmError):
    """Rows fail to be probability vectors within tolerance."""


class NonstationaryParameters(GhmmError):
    """Parameters outside the model's stationarity region."""


class DimensionMismatch(GhmmError):
    """Incompatible array shapes in a model constructor."""


class NonPsdCovariance(GhmmError):
    """A covariance lost positive semidefiniteness beyond the clip tolerance."""


class RiccatiNoConvergence(GhmmError):
    """Steady-state covariance iteration failed to converge."""


class StateSpaceTooLarge(GhmmError):
    """Tabulated state space beyond the supported caps."""


class SizeCap(GhmmError):
    """Embedded chain larger than the supported cap."""


class BoundaryHit(GhmmError):
    """Optimizer pinned a reparametrized coordinate beyond the +-30 box.

    Raised when the best ascent run leaves the admissible box, meaning the
    likelihood supremum lies at a degenerate configuration. Carries the
    last admissible point and its log-likelihood when known.
    """

    def __init__(self, message, theta=None, loglik=None, iterations=0):
        super().__init__(message)
        self.theta = theta
        self.loglik = loglik
        self.iterations = iterations


class NestingViolation(GhmmError):
    """Restricted fit beats the full fit by more than optimizer tolerance."""


class ConfigError(GhmmError):
    """Config validation failure; carries the offending field path."""

    def __init__(self, path, msg):
        self.path = path
        super().__init__(f"{path}: {msg}")


class SingularInformation(UserWarning):
    """Fisher matrix numerically singular; pseudo-inverse used."""


class AsymmetryWarning(UserWarning):
    """Hessian asymmetry before symmetrization above the reporting threshold."""
