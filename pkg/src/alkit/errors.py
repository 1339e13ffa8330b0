"""Toolkit exception types and CLI exit codes."""


class ConfigError(ValueError):
    """Raised when an experiment config violates its invariants.

    ``violations`` lists every failed check so the user can fix all of
    them in one pass.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class TrainingDivergedError(RuntimeError):
    """Raised when a training loop produces a non-finite loss."""


class IndexSetError(ValueError):
    """Raised when an index-set file violates its structural invariants."""


# CLI exit codes
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_TRAINING_FAILURE = 3
