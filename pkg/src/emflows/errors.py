"""Exception hierarchy for emflows.

Every failure mode a caller is expected to handle gets its own class so
tests and the CLI can match on type rather than message text.
"""


class EmflowsError(Exception):
    """Base class for all emflows errors."""


class InvalidParameterError(EmflowsError, ValueError):
    """An argument violates a documented precondition."""


class InvalidConstantsError(EmflowsError, ValueError):
    """A bound was requested with constants outside its validity range."""


class DegenerateModelError(EmflowsError, ValueError):
    """A model constructor received inputs that make the model ill-posed."""


class NotLogConcaveError(EmflowsError):
    """The complete log-likelihood is not strongly concave."""


class NoCertificateError(EmflowsError):
    """No certified convexity constant can be derived for the model."""


class UnsupportedModelError(EmflowsError):
    """The model lacks the structure (closed forms, affinity) an operation needs."""


class UnsupportedRepresentationError(EmflowsError):
    """The latent-law representation is not supported by this operation."""


class UnsupportedSchemeError(EmflowsError):
    """The requested check or operation does not apply to this iteration scheme."""


class InsufficientParticlesError(EmflowsError):
    """Too few (or degenerate) particles for the requested estimate."""


class StepSizeError(EmflowsError, ValueError):
    """A step size violates the scheme's stability precondition."""


class DivergenceError(EmflowsError):
    """An iteration produced a non-finite value."""

    def __init__(self, iteration: int, what: str):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")


class ConfigError(EmflowsError, ValueError):
    """An experiment configuration is malformed; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
