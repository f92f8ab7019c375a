"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: usage errors exit 1, data/format
errors exit 2, numerical failures exit 3.
"""


class SFHandError(Exception):
    """Base class for all package errors."""


class UsageError(SFHandError):
    """A caller violated an API contract (bad mode, duplicate hand, ...)."""


class DimensionError(UsageError):
    """Tensor shapes do not line up."""


class NumericalError(SFHandError):
    """A numerical routine failed (non-convergence, NaN loss, ...)."""


class DataFormatError(SFHandError):
    """Base class for clip-file and checkpoint format violations."""


class VersionError(DataFormatError):
    """File carries an unsupported format version."""


class TruncationError(DataFormatError):
    """File is shorter than its manifest or header claims."""


class ChecksumError(DataFormatError):
    """Stored checksum does not match the payload."""
