"""Exception types shared across the package."""


class UdeOedError(Exception):
    """Base class for all package errors."""


class InputError(UdeOedError):
    """Malformed or out-of-range input data."""


class ConfigError(UdeOedError):
    """Invalid configuration (model selection, architecture, manifest)."""


class IntegrationFailureError(UdeOedError):
    """Step-size underflow during integration (stiffness or blow-up)."""

    def __init__(self, message: str, t_failure: float):
        super().__init__(message)
        self.t_failure = t_failure


class SingularMatrixError(UdeOedError):
    """Matrix not positive definite within the relative threshold.

    For Fisher matrices this is the signal that a dimension-reduction
    strategy is required.
    """

    def __init__(self, message: str, smallest_eigenvalue: float):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class RankError(UdeOedError):
    """Requested subspace dimension exceeds the numerically positive rank."""


class DomainError(UdeOedError):
    """Model evaluated outside its physical domain (e.g. volume <= 0)."""


class DesignInfeasibleError(UdeOedError):
    """No feasible sampling design yields a positive definite FIM."""

    def __init__(self, message: str, strategy: str):
        super().__init__(message)
        self.strategy = strategy


class SamplingError(UdeOedError):
    """Measurement drawing asked for more points than available."""


class IdentifiabilityError(UdeOedError):
    """Rank-deficient residual Jacobian in parameter estimation."""


class ScenarioParseError(UdeOedError):
    """Malformed scenario string."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


class DegenerateEigenvalueWarning(UserWarning):
    """Smallest eigenvalue nearly multiple: E-criterion gradient is a subgradient."""
