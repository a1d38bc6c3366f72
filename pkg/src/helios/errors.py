"""Exception hierarchy shared by all helios modules."""


class HeliosError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HeliosError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class SingularityError(DomainError):
    """Evaluation point coincides with a singularity (e.g. a point source)."""


class GeometryError(HeliosError, ValueError):
    """Sources, sensors or sampling points are placed inconsistently."""


class InvalidInputError(HeliosError, ValueError):
    pass


class ShapeError(HeliosError, ValueError):
    pass


class NumericError(HeliosError, ArithmeticError):
    """A non-finite intermediate value appeared."""


class ContractViolation(HeliosError):
    """The preconditions of an estimate are not met (e.g. no sign change)."""


class OptimizerError(NumericError):
    pass


class TrainingError(NumericError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(HeliosError, ValueError):
    """A binary file is truncated, corrupted, or has the wrong version."""


class ConfigurationError(HeliosError):
    pass


class GenerationError(HeliosError, RuntimeError):
    """Random generation could not satisfy its constraints."""
