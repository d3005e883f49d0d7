"""Exception hierarchy shared by every tsbench module."""


class TsBenchError(Exception):
    """Root of all errors raised by tsbench."""


class ConfigError(TsBenchError):
    pass


class ConfigSyntaxError(ConfigError):
    """The config document is not valid YAML or not a mapping."""


class UnknownKeyError(ConfigError):
    pass


class TypeMismatchError(ConfigError):
    """A config value has the wrong type or lies outside its allowed range."""


class ValidationFailed(ConfigError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(str(f) for f in report.findings) or "invalid configuration")


class GraphError(TsBenchError):
    pass


class CycleError(GraphError):
    pass


class NonFiniteInputError(TsBenchError, ValueError):
    pass


class NumericalDivergenceError(TsBenchError):
    pass


class ScoringError(TsBenchError):
    pass


class UniverseMismatchError(ScoringError):
    pass


class LagOverflowError(ScoringError):
    pass


class InvalidLinkError(ScoringError):
    pass


class ParseError(TsBenchError):
    pass


class InsufficientDataError(TsBenchError):
    pass


class MissingPredictionError(TsBenchError):
    pass


class ExportError(TsBenchError):
    """Writing experiment output failed."""
