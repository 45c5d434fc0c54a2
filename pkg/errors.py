"""Excecoes do toolkit.

Todas derivam de RuntimeError, entao quem ja captura RuntimeError
continua funcionando.
"""


class AnalysisError(RuntimeError):
    """Base error for every rejection raised by the analysis modules."""


class IngestError(AnalysisError):
    pass


class ScalingError(AnalysisError):
    pass


class MultifractalError(AnalysisError):
    pass


class SurrogateError(AnalysisError):
    pass


class DccaError(AnalysisError):
    pass


class RandomWalkTestError(AnalysisError):
    pass


class SynthError(AnalysisError):
    pass


class ConfigError(AnalysisError):
    """Invalid configuration or command-line usage (CLI exit status 2)."""


class IaaftConvergenceWarning(UserWarning):
    """IAAFT hit max_iterations before the spectrum error settled."""

    def __init__(self, message: str, rmse: float, iterations: int):
        super().__init__(message)
        self.rmse = rmse
        self.iterations = iterations
