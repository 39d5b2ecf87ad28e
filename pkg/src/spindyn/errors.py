"""Exception hierarchy shared across the package."""


class SpindynError(Exception):
    """Base class for all package errors."""


class ParameterError(SpindynError, ValueError):
    """A caller-supplied parameter is out of its allowed range."""


class IntegrityError(SpindynError):
    """A data structure violates one of its own declared invariants."""


class NumericError(SpindynError):
    """An iterative numeric procedure failed to converge."""


class ConstructionError(SpindynError):
    """A derived object failed its post-construction validation.

    Carries the validation report on the ``report`` attribute.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(SpindynError):
    """A run configuration failed schema validation."""


class HypothesisError(SpindynError):
    """A precondition of a certified inequality failed at run time."""
