"""Exception hierarchy shared by all modules."""


class IndeflinkError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(IndeflinkError):
    pass


class AssemblyError(IndeflinkError):
    pass


class DimensionError(IndeflinkError):
    pass


class SpectralError(IndeflinkError):
    pass


class DegenerateSpectrumError(SpectralError):
    pass


class EvaluationError(IndeflinkError):
    pass


class DifferentiabilityProbeError(IndeflinkError):
    pass


class ConstructionError(IndeflinkError):
    pass


class ParameterError(IndeflinkError):
    pass


class InvarianceViolation(IndeflinkError):
    pass


class InversionError(IndeflinkError):
    pass


class HypothesisViolation(IndeflinkError):
    pass


class CalibrationError(IndeflinkError):
    pass


class GrowthError(CalibrationError):
    pass


class HomotopyValidationError(IndeflinkError):
    pass


class InitializationError(IndeflinkError):
    pass


class DescentAnomaly(IndeflinkError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else {}


class MaximizerError(IndeflinkError):
    pass


class RefinementError(IndeflinkError):
    pass


class OracleInconclusive(IndeflinkError):
    pass


class ConfigParseError(ConfigurationError):
    def __init__(self, key_path, message):
        super().__init__(f"{key_path}: {message}")
        self.key_path = key_path
