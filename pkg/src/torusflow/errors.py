"""Exception and warning types raised across the package."""


class TorusFlowError(Exception):
    """Base class for all package errors."""


class DegenerateLattice(TorusFlowError):
    pass


class GridMismatch(TorusFlowError):
    pass


class NotConformal(TorusFlowError):
    pass


class GaussMapSingular(TorusFlowError):
    pass


class WindingObstruction(TorusFlowError):
    pass


class InadmissibleGauge(TorusFlowError):
    pass


class NonPeriodicProduct(TorusFlowError):
    pass


class NotClosed(TorusFlowError):
    pass


class DegenerateMetric(TorusFlowError):
    pass


class MnvRequiresReal(TorusFlowError):
    pass


class NumericalBlowup(TorusFlowError):
    pass


class CutoffTooLarge(TorusFlowError):
    pass


class NotOnCurve(TorusFlowError):
    pass


class UnsupportedProjection(TorusFlowError):
    pass


class ParseError(TorusFlowError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ValidationError(TorusFlowError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class StiffnessWarning(UserWarning):
    pass


class EmptyZeroSet(UserWarning):
    """Emitted when a spectral scan finds no zero-set samples."""
