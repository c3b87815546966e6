"""Exception hierarchy shared by every module."""


class HeritabilityError(ValueError):
    """Base class for invalid inputs and numerical failures."""


class ZeroVarianceError(HeritabilityError):
    pass


class NonIdentifiableError(HeritabilityError):
    """The likelihood is flat along a ridge (e.g. an identity kernel)."""


class IllConditionedError(HeritabilityError):
    pass


class ConvergenceError(HeritabilityError):
    pass


class CopulaError(HeritabilityError):
    pass


class ConfigError(HeritabilityError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
