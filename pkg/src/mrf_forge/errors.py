"""Exception types shared across the package.

Dimension and dtype problems raise plain ValueError / TypeError; the classes
here cover conditions a caller may reasonably want to catch separately
(corrupt files, degenerate signals, iteration failures, bad configs).
"""


class MrfForgeError(Exception):
    """Base class for package-specific errors."""


class ConfigError(MrfForgeError):
    """A run configuration is missing a field or holds an invalid value."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class FormatError(MrfForgeError):
    """A binary file does not look like the expected format (bad magic or header)."""


class VersionError(FormatError):
    """A binary file carries an unsupported format version."""


class ChecksumError(FormatError):
    """A binary file is truncated or its payload checksum does not match."""


class DegenerateSignalError(MrfForgeError):
    """A signal cannot be phase-aligned or normalized (zero sum or zero norm)."""


class ConvergenceError(MrfForgeError):
    """An iterative solver exhausted its iteration budget before converging."""

    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class TrainingDivergedError(MrfForgeError):
    """A training loss or parameter became non-finite."""

    def __init__(self, epoch, batch, message=None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(
            message or f"non-finite value in epoch {epoch}, batch {batch}"
        )
