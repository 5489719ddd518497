"""LSM-tree key-value engine with pluggable learned per-table indexes."""

from .core import (
    CompactionMode,
    EngineConfig,
    Granularity,
    IndexKind,
    IndexParams,
    PositionRange,
    boundary_blocks,
    level_capacity_bytes,
    levels_needed,
)
from .engine import LsmEngine
from .errors import (
    CorruptIndexError,
    CorruptTableError,
    EmptyIndexError,
    IngestError,
    InvalidConfigError,
    InvalidInputError,
    LsmError,
    StorageError,
)
from .indexes import build_index, deserialize_index, serialize_index

__version__ = "0.1.0"

__all__ = [
    "CompactionMode",
    "CorruptIndexError",
    "CorruptTableError",
    "EmptyIndexError",
    "EngineConfig",
    "Granularity",
    "IndexKind",
    "IndexParams",
    "IngestError",
    "InvalidConfigError",
    "InvalidInputError",
    "LsmEngine",
    "LsmError",
    "PositionRange",
    "StorageError",
    "boundary_blocks",
    "build_index",
    "deserialize_index",
    "level_capacity_bytes",
    "levels_needed",
    "serialize_index",
]
