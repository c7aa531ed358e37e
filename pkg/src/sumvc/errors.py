"""Exception taxonomy shared across the package.

Every deliberate failure raises one of these so callers (and the CLI)
can map problems to exit codes without string matching.
"""


class SumvcError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SumvcError, ValueError):
    """A hyperparameter or option is outside its legal range."""


class DimensionError(SumvcError, ValueError):
    """Array shapes are inconsistent with the requested operation."""


class NumericError(SumvcError, ValueError):
    """An input value is non-finite or otherwise numerically unusable."""


class ContractError(SumvcError, ValueError):
    """A documented precondition was violated by the caller."""


class GraphError(SumvcError, RuntimeError):
    """Autodiff graph misuse (wrong tape, detached root, reuse after close)."""


class DataError(SumvcError, ValueError):
    """A dataset violates a structural invariant (labels, class coverage)."""


class FormatError(SumvcError, ValueError):
    """A binary or text artifact does not parse.

    Carries the byte offset at which decoding failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class OracleError(SumvcError, RuntimeError):
    """A reference computation could not be trusted (e.g. nondeterminism)."""


class NumericAbort(SumvcError, RuntimeError):
    """Training produced a non-finite loss and stopped.

    ``report`` holds the partial training report up to the last finite
    epoch so the caller can inspect what happened.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
