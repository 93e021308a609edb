"""Exception hierarchy shared by every nestedshape module.

Each family carries the process exit code the CLI returns for it:
2 for validation problems, 3 for numerical non-convergence, 4 for I/O.
"""


class NestedShapeError(Exception):
    exit_code = 1


class ValidationError(NestedShapeError):
    exit_code = 2


class DimensionError(ValidationError):
    pass


class RangeError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class DegenerateConfigError(ValidationError):
    pass


class RankError(ValidationError):
    pass


class AntipodalError(ValidationError):
    pass


class ProjectionUndefined(ValidationError):
    pass


class NotProcrustesAlignedError(ValidationError):
    pass


class UnderdeterminedError(ValidationError):
    pass


class DegenerateVarianceError(ValidationError):
    pass


class NumericalError(NestedShapeError):
    exit_code = 3


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class NonUniqueMeanError(NumericalError):
    def __init__(self, message, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class NoUniqueEquilibriumError(NumericalError):
    pass


class IngestError(NestedShapeError):
    exit_code = 4

    def __init__(self, message, problems=()):
        self.problems = list(problems)
        if self.problems:
            message = message + "\n" + "\n".join(f"  {p}" for p in self.problems)
        super().__init__(message)


class StageError(NestedShapeError):
    """A pipeline stage failed; `cause` is the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4 if isinstance(cause, OSError) else 1)
