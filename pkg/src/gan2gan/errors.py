"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: UsageError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class Gan2GanError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(Gan2GanError):
    """Invalid configuration: bad layer chain, non-positive clip value, etc."""


class UsageError(Gan2GanError):
    """API or CLI misuse: backward before forward, unknown noise spec, ..."""


class DataError(Gan2GanError):
    """Invalid input data: odd patch sizes, missing stage artifacts, ..."""


class NumericalError(Gan2GanError):
    """Numerical failure during training (NaN/Inf loss)."""
