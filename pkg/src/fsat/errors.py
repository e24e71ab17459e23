"""Exception hierarchy. CLI exit codes are derived from these classes."""


class FsatError(Exception):
    exit_code = 1


class ConfigError(FsatError, ValueError):
    """Invalid configuration or precondition; CLI exit code 2."""

    exit_code = 2


class DomainError(ConfigError):
    """A numeric argument outside its documented domain."""


class SizeError(ConfigError):
    """Array length or shape mismatch."""


class DecodeError(FsatError):
    """Audio file uses an unsupported codec."""


class WavFormatError(FsatError):
    """Audio file is malformed or truncated."""


class ManifestError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(FsatError):
    exit_code = 2


class NumericalError(FsatError, ArithmeticError):
    """Non-finite loss or gradient; CLI exit code 3."""

    exit_code = 3


class AttackError(NumericalError):
    pass


class TrainingError(NumericalError):
    pass
