"""Exception hierarchy shared by all modules."""


class TvsdacError(Exception):
    """Base class for every error raised by this package."""


class ExprSyntaxError(TvsdacError):
    def __init__(self, offset, message):
        self.offset = offset
        self.message = message
        super().__init__(f"syntax error at offset {offset}: {message}")


class ExprEvalError(TvsdacError):
    pass


class UnboundVariableError(ExprEvalError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class ExprDomainError(ExprEvalError):
    pass


class StructureError(TvsdacError):
    """A model violates a structural assumption (strict feedback, origin, dimensions)."""


class InterpolationError(TvsdacError):
    def __init__(self, piece, message):
        self.piece = piece
        super().__init__(f"interpolation function rho{piece}: {message}")


class PlantEvaluationError(TvsdacError):
    def __init__(self, stage, piece, message):
        self.stage = stage
        self.piece = piece
        super().__init__(f"plant term (i={stage}, j={piece}): {message}")


class SingularGainError(TvsdacError):
    def __init__(self, stage, value):
        self.stage = stage
        self.value = value
        super().__init__(f"composite input gain psi{stage}^c = {value!r} is singular")


class SchedulingError(TvsdacError):
    pass


class DimensionError(TvsdacError):
    pass


class DerivativeDegenerateError(TvsdacError):
    pass


class NoRootError(TvsdacError):
    pass


class DegenerateDerivativeWarning(UserWarning):
    """Solve returned a point where the approximator is flat in the unknown."""


class InvalidDesignError(TvsdacError):
    pass


class MissingColumnError(TvsdacError):
    pass


class IntegrationError(TvsdacError):
    def __init__(self, t, message):
        self.t = t
        super().__init__(f"integration fault at t={t:.17g}: {message}")


class CompactSetExit(TvsdacError):
    def __init__(self, t, coordinate, value, interval):
        self.t = t
        self.coordinate = coordinate
        self.value = value
        self.interval = interval
        lo, hi = interval
        super().__init__(
            f"state left compact set at t={t:.17g}: {coordinate}={value:.17g} "
            f"outside [{lo:g}, {hi:g}]"
        )


class ScenarioError(TvsdacError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
