"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes: ParamError/ContractError -> 2,
file- and data-shaped failures -> 3.
"""


class PostHocError(Exception):
    """Base class for all toolkit errors."""


class ParamError(PostHocError):
    """Invalid argument or configuration value."""


class ContractError(PostHocError):
    """Caller violated a documented precondition (e.g. unsorted input)."""


class FormatError(PostHocError):
    """Malformed binary container (bad magic, truncation, trailing bytes)."""


class DataError(PostHocError):
    """Well-formed container with unusable content (non-finite values)."""


class MaskError(PostHocError):
    """Degenerate mask (no voxels inside)."""


class IoError(PostHocError):
    """Filesystem failure while reading or writing an artifact."""
