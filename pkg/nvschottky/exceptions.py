class NVSchottkyException(Exception):
    """Raised when an exception is encountered while building or running a device model."""

    exit_code = 1


class ConfigError(NVSchottkyException):
    """Raised when a configuration document cannot be turned into valid model parameters."""

    exit_code = 2


class ConfigParseError(ConfigError):
    """Raised when a configuration document is not valid YAML or holds an unparseable value."""

    def __init__(self, message, line=None, field=None):
        self.message = message
        self.line = line
        self.field = field
        super().__init__(message, line, field)

    def __str__(self):
        where = []
        if self.field is not None:
            where.append(f"field '{self.field}'")
        if self.line is not None:
            where.append(f"line {self.line}")
        if where:
            return f"{self.message} ({', '.join(where)})"
        return self.message


class MissingParameterError(ConfigError):
    """Raised when a parameter without a value is required to run a campaign entry."""


class InvariantViolation(ConfigError):
    """Raised when a parameter breaks one of the model's invariants."""

    def __init__(self, field, bound, value=None):
        self.field = field
        self.bound = bound
        self.value = value
        super().__init__(field, bound, value)

    def __str__(self):
        if self.value is None:
            return f"Invalid '{self.field}': must satisfy {self.bound}"
        return f"Invalid '{self.field}' = {self.value!r}: must satisfy {self.bound}"


class SolverError(NVSchottkyException):
    """Raised when a numerical solve fails."""

    exit_code = 3


class DegenerateInputError(SolverError):
    """Raised when the inputs leave a solve without a unique answer (e.g. an all-zero rate matrix)."""


class GridResolutionError(SolverError):
    """Raised when the grid is too coarse to resolve the illuminated slab."""


class ConvergenceError(SolverError):
    """Raised when an iterative solve stops before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None, bias=None):
        self.message = message
        self.residual = residual
        self.iterations = iterations
        self.bias = bias
        super().__init__(message, residual, iterations, bias)

    def __str__(self):
        message = self.message
        if self.bias is not None:
            message += f" at U = {self.bias:g} V"
        if self.iterations is not None:
            message += f" after {self.iterations} iterations"
        if self.residual is not None:
            message += f" (last residual {self.residual:.3e})"
        return message

    def to_dict(self):
        return {
            'type': type(self).__name__,
            'message': self.message,
            'residual': self.residual,
            'iterations': self.iterations,
            'bias': self.bias,
        }


class TransportError(SolverError):
    """Raised when the thermionic current cannot be evaluated to a finite value."""


class CalibrationError(SolverError):
    """Raised when a calibration cannot be carried out."""


class UnreachableTargetError(CalibrationError):
    """Raised when a calibration target lies beyond what the model can produce."""


class NoKneeError(SolverError):
    """Raised when no interior inflection point can be found on a curve."""


class VerificationMismatch(NVSchottkyException):
    """Raised when persisted results do not match their manifest."""

    exit_code = 4


class NVSchottkyWarning(Warning):
    """Base warning for nvschottky."""


class ClampedIterateWarning(NVSchottkyWarning):
    """A Newton iterate left its physical bracket and was pulled back."""


class OverrideWarning(NVSchottkyWarning):
    """An override replaces a value that an earlier layer already set."""
