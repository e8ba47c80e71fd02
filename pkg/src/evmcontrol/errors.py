"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: validation problems exit 1, I/O
problems exit 2 (plain OSError), numerical failures exit 3.
"""


class EvmControlError(Exception):
    """Base class for all toolkit errors."""


class ProjectFormatError(EvmControlError):
    """The project document cannot be parsed into the expected shape."""


class ValidationError(EvmControlError):
    """Inputs are well-formed but violate a contract (cycle, bad numeric, ...)."""


class NumericsError(EvmControlError):
    """A solver or sampling loop failed to converge within its budget."""
