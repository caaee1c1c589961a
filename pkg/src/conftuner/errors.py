"""Exception types shared across the package."""


class ConftunerError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(ConftunerError):
    """A schema document or option specification is invalid."""


class ConstraintError(ConftunerError):
    """A constraint expression cannot be tokenized or parsed.

    Carries the offending position so callers can point at the text.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class EvaluationError(ConftunerError):
    """A constraint could not be evaluated against a configuration."""


class RepairInfeasibleError(ConftunerError):
    """No assignment over the value lattices satisfies the constraints."""


class EnvironmentFailure(ConftunerError):
    """An external environment failed while being exercised.

    ``phase`` names the lifecycle step that failed: "render", "start",
    "stop", "reload", "benchmark", or "parse".
    """

    def __init__(self, phase: str, message: str):
        super().__init__(f"{phase}: {message}")
        self.phase = phase


class UsageError(ConftunerError):
    """Bad command-line invocation (maps to exit code 1)."""
