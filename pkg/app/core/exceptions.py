"""Exception hierarchy shared by every service and the CLI."""


class FracLabError(Exception):
    """Base class for all library errors."""


class InvalidParams(FracLabError, ValueError):
    pass


class Unsupported(FracLabError):
    pass


class NonConvergence(FracLabError):
    pass


class QuadratureFailure(FracLabError):
    pass


class TailNotNegligible(FracLabError):
    pass


class ContourFailure(FracLabError):
    pass


class LengthMismatch(FracLabError, ValueError):
    pass


class ShapeMismatch(FracLabError, ValueError):
    pass


class InsufficientDerivOrder(FracLabError):
    pass


class TruncationUnsupported(FracLabError):
    pass


class HypothesisViolation(FracLabError):
    pass


class ConfigError(FracLabError):
    """Config problems; ``errors`` holds every message found, each with its line number."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ParseError(ConfigError):
    pass


class ValidationError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass
