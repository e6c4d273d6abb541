"""Exception hierarchy shared across the package."""


class LyatError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LyatError):
    """Invalid or inconsistent configuration (bad key, bad value, bad dims)."""


class NumericError(LyatError):
    """A computation produced a non-finite value.

    Carries enough context (where, and for simulations the step index) to
    post-mortem a run.
    """

    def __init__(self, message, where=None, step_index=None):
        super().__init__(message)
        self.where = where
        self.step_index = step_index
        # populated by the episode loop so a partial trace can still be flushed
        self.trace = None


class RankError(LyatError):
    """Control-effectiveness matrix lost full row rank; the step must abort."""


class IntegratorStateError(LyatError):
    """Parameter estimate left the admissible ball beyond tolerance."""
