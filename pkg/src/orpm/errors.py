"""Exception types shared across the package.

Exit-code mapping for the CLI: usage errors exit 1, FormatError exits 2,
ContractError exits 3.
"""


class ContractError(ValueError):
    """An operation was called with inputs violating its contract."""


class FormatError(ValueError):
    """A serialized artifact is malformed; the message names the offending
    field or byte offset."""
