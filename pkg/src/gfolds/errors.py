"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes: configuration problems,
data/schema problems, and numerical aborts are kept separate so scripted
callers can react differently to each.
"""


class GfoldsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GfoldsError):
    """Invalid configuration: bad hyperparameter, schema/version mismatch."""


class DataError(GfoldsError):
    """Invalid input data: malformed records, schema violations, bad graphs."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(GfoldsError):
    """Tensor operands with incompatible shapes."""


class DomainError(GfoldsError):
    """Numeric argument outside a formula's domain."""


class IntegrityError(GfoldsError):
    """Internal consistency violation, e.g. a trainable parameter without a gradient."""


class EmptyBatchError(GfoldsError):
    """An operation received a batch with nothing to compute on."""


class TrainingDiverged(GfoldsError):
    """Loss became non-finite during training."""

    def __init__(self, step, message=None):
        super().__init__(message or f"non-finite loss at step {step}")
        self.step = step
