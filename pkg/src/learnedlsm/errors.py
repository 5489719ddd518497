"""Exception types shared across the engine, index, and bench layers."""


class LsmError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(LsmError):
    """A configuration value violates its documented constraints."""


class InvalidInputError(LsmError):
    """Caller-supplied data violates a precondition (unsorted keys, bad sizes)."""


class EmptyIndexError(LsmError):
    """predict() was called on an index built over zero keys."""


class CorruptIndexError(LsmError):
    """Serialized index bytes fail magic/version/checksum validation."""


class CorruptTableError(LsmError):
    """An on-disk table fails structural validation."""


class StorageError(LsmError):
    """An OS-level I/O failure surfaced from the storage layer."""


class IngestError(LsmError):
    """A dataset file is missing, truncated, or malformed."""
