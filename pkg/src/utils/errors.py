"""
Exception hierarchy for fogbench.

Library code raises these; only the CLI layer turns them into exit codes.
"""


class FogbenchError(Exception):
    """Base class for every error raised by fogbench."""

    exit_code = 1


class ConfigError(FogbenchError, ValueError):
    """Invalid, unknown or missing configuration."""

    exit_code = 2


class ShapeError(FogbenchError, ValueError):
    """Array or tensor shapes do not line up."""

    exit_code = 3


class ContractError(FogbenchError, ValueError):
    """A documented precondition was violated by the caller."""

    exit_code = 3


class DataLoadError(FogbenchError):
    """One or more files could not be loaded.

    Attributes:
        failures: list of (path, reason) tuples, one per failing file
    """

    exit_code = 3

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])


class TagParseError(FogbenchError, ValueError):
    """An acquisition tag (lighting, density, position) could not be parsed."""

    exit_code = 3


class AmbiguityError(FogbenchError):
    """Two slices claim the same (position, lighting, density)."""

    exit_code = 3


class InfeasibleTargetError(FogbenchError, ValueError):
    """A requested panel contrast cannot be reached by adding fog."""

    exit_code = 3


class CheckpointError(FogbenchError):
    """A model checkpoint is malformed or does not match the configuration."""

    exit_code = 3


class NumericalAbort(FogbenchError):
    """Training produced a non-finite value."""

    exit_code = 4
