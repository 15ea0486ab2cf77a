"""Exception types shared across the package."""

from __future__ import annotations


class CapflowError(Exception):
    """Base class for package-specific failures."""


class ConvergenceError(CapflowError):
    """An iterative solve failed to reach its tolerance.

    Carries the last energy value and, for time-dependent solves, the
    offending step index.
    """

    def __init__(self, message: str, last_energy: float | None = None,
                 step_index: int | None = None):
        super().__init__(message)
        self.last_energy = last_energy
        self.step_index = step_index


class ConfigError(CapflowError):
    """A configuration file is malformed or violates the schema."""


class PipelineError(CapflowError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
