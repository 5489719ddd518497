"""Domain types, engine configuration, and closed-form LSM sizing math.

Keys are unsigned 64-bit integers; entries are fixed-width records of
``8 (key) + 8 (sequence/kind word) + value_size`` bytes so that an entry
position maps to a file offset in closed form.  External byte-string keys
longer than 8 bytes can be mapped through their big-endian 8-byte prefix
(a documented, lossy convention); everything below this line works on the
integer form only.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .errors import InvalidConfigError, InvalidInputError

KEY_BYTES = 8
WORD_BYTES = 8  # sequence number (63 bits) packed with the kind bit
MAX_KEY = 2**64 - 1
MAX_SEQ = 2**63 - 1

# Capacities and file offsets are kept inside the signed 64-bit range so
# they stay representable in every on-disk field and most OS file APIs.
_MAX_BYTES = 2**63 - 1

KIND_PUT = 0
KIND_DELETE = 1

_KEY_STRUCT = struct.Struct("<Q")


def key_to_bytes(key: int) -> bytes:
    """Fixed 8-byte little-endian form of a key."""
    if not 0 <= key <= MAX_KEY:
        raise InvalidInputError(f"key {key} outside the unsigned 64-bit range")
    return _KEY_STRUCT.pack(key)


def key_from_bytes(raw: bytes) -> int:
    if len(raw) != KEY_BYTES:
        raise InvalidInputError(f"key must be exactly {KEY_BYTES} bytes, got {len(raw)}")
    return _KEY_STRUCT.unpack(raw)[0]


def key_from_prefix(raw: bytes) -> int:
    """Map an arbitrary byte-string key to u64 via its big-endian 8-byte prefix."""
    padded = raw[:8].ljust(8, b"\x00")
    return int.from_bytes(padded, "big")


def pack_word(seq: int, kind: int) -> int:
    if not 0 <= seq <= MAX_SEQ:
        raise InvalidInputError(f"sequence {seq} outside the 63-bit range")
    if kind not in (KIND_PUT, KIND_DELETE):
        raise InvalidInputError(f"unknown entry kind {kind}")
    return (seq << 1) | kind


def unpack_word(word: int) -> tuple[int, int]:
    """Return (seq, kind) from a packed sequence/kind word."""
    return word >> 1, word & 1


@dataclass(frozen=True)
class Entry:
    """One stored record: the unit of buffering, table building, and merging."""

    key: int
    seq: int
    kind: int
    value: bytes

    @property
    def word(self) -> int:
        return pack_word(self.seq, self.kind)

    def to_bytes(self, value_size: int) -> bytes:
        if self.kind == KIND_PUT and len(self.value) != value_size:
            raise InvalidInputError(
                f"value must be exactly {value_size} bytes, got {len(self.value)}"
            )
        value = self.value.ljust(value_size, b"\x00")
        return _KEY_STRUCT.pack(self.key) + _KEY_STRUCT.pack(self.word) + value

    @classmethod
    def from_bytes(cls, raw: bytes, value_size: int) -> "Entry":
        expected = entry_size_bytes(value_size)
        if len(raw) != expected:
            raise InvalidInputError(f"entry must be {expected} bytes, got {len(raw)}")
        key = _KEY_STRUCT.unpack_from(raw, 0)[0]
        word = _KEY_STRUCT.unpack_from(raw, 8)[0]
        seq, kind = unpack_word(word)
        return cls(key=key, seq=seq, kind=kind, value=raw[16:])


def entry_size_bytes(value_size: int) -> int:
    return KEY_BYTES + WORD_BYTES + value_size


@dataclass(frozen=True)
class PositionRange:
    """Inclusive range of entry positions delivered by an index prediction."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi < self.lo:
            raise InvalidInputError(f"malformed position range [{self.lo}, {self.hi}]")

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, pos: int) -> bool:
        return self.lo <= pos <= self.hi


class IndexKind(enum.Enum):
    FENCE_POINTER = "fence"
    PLR = "plr"
    FITING_TREE = "fiting"
    PGM = "pgm"
    RADIX_SPLINE = "radixspline"
    RMI = "rmi"

    @classmethod
    def parse(cls, name: str) -> "IndexKind":
        aliases = {
            "fence": cls.FENCE_POINTER,
            "fence_pointer": cls.FENCE_POINTER,
            "fp": cls.FENCE_POINTER,
            "plr": cls.PLR,
            "fiting": cls.FITING_TREE,
            "fiting_tree": cls.FITING_TREE,
            "fit": cls.FITING_TREE,
            "pgm": cls.PGM,
            "radixspline": cls.RADIX_SPLINE,
            "radix_spline": cls.RADIX_SPLINE,
            "rs": cls.RADIX_SPLINE,
            "rmi": cls.RMI,
        }
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise InvalidConfigError(f"unknown index kind {name!r}") from None


class Granularity(enum.Enum):
    PER_FILE = "file"
    PER_LEVEL = "level"

    @classmethod
    def parse(cls, name: str) -> "Granularity":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown granularity {name!r}") from None


class CompactionMode(enum.Enum):
    PARTIAL = "partial"
    FULL = "full"

    @classmethod
    def parse(cls, name: str) -> "CompactionMode":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown compaction mode {name!r}") from None


@dataclass(frozen=True)
class IndexParams:
    """Per-kind model parameters; only the fields of the selected kind matter.

    ``rmi_leaf_target`` switches the RMI leaf count from a fixed value to a
    per-build doubling search that stops once the recorded error boundary
    fits the target; zero disables the search.
    """

    epsilon: int = 16
    epsilon_recursive: int = 4
    radix_bits: int = 1
    leaf_count: int = 64
    fp_block_bytes: int = 4096
    rmi_leaf_target: int = 0

    def validate(self, kind: IndexKind) -> None:
        if kind in (IndexKind.PLR, IndexKind.FITING_TREE, IndexKind.PGM, IndexKind.RADIX_SPLINE):
            if self.epsilon < 1:
                raise InvalidConfigError("epsilon must be >= 1")
        if kind is IndexKind.PGM and self.epsilon_recursive < 1:
            raise InvalidConfigError("epsilon_recursive must be >= 1")
        if kind is IndexKind.RADIX_SPLINE and not 1 <= self.radix_bits <= 30:
            raise InvalidConfigError("radix_bits must be in [1, 30]")
        if kind is IndexKind.RMI:
            if self.leaf_count < 1:
                raise InvalidConfigError("leaf_count must be >= 1")
            if self.rmi_leaf_target < 0:
                raise InvalidConfigError("rmi_leaf_target must be >= 0")
        if kind is IndexKind.FENCE_POINTER and self.fp_block_bytes < 1:
            raise InvalidConfigError("fp_block_bytes must be >= 1")


@dataclass(frozen=True)
class EngineConfig:
    data_dir: str
    size_ratio: int = 10
    write_buffer_bytes: int = 4 * 2**20
    sstable_target_bytes: int = 4 * 2**20
    value_size: int = 100
    block_bytes: int = 4096
    bloom_bits_per_key: int = 10
    index_kind: IndexKind = IndexKind.PGM
    index_params: IndexParams = field(default_factory=IndexParams)
    granularity: Granularity = Granularity.PER_FILE
    compaction: CompactionMode = CompactionMode.PARTIAL
    per_level_epsilon: tuple[int, ...] | None = None

    @property
    def entry_size(self) -> int:
        return entry_size_bytes(self.value_size)

    def validate(self) -> None:
        if self.size_ratio < 2:
            raise InvalidConfigError("size_ratio must be >= 2")
        if self.block_bytes < 1 or self.block_bytes & (self.block_bytes - 1):
            raise InvalidConfigError("block_bytes must be a power of two")
        if self.value_size < 1:
            raise InvalidConfigError("value_size must be >= 1")
        if self.sstable_target_bytes < self.block_bytes:
            raise InvalidConfigError("sstable_target_bytes must be >= block_bytes")
        if self.write_buffer_bytes < self.entry_size:
            raise InvalidConfigError("write_buffer_bytes must hold at least one entry")
        if self.bloom_bits_per_key < 1:
            raise InvalidConfigError("bloom_bits_per_key must be >= 1")
        if self.granularity is Granularity.PER_LEVEL and self.compaction is not CompactionMode.FULL:
            raise InvalidConfigError(
                "per-level index granularity requires full-level compaction "
                "(set compaction='full')"
            )
        if self.per_level_epsilon is not None:
            if not self.per_level_epsilon or any(e < 1 for e in self.per_level_epsilon):
                raise InvalidConfigError("per_level_epsilon entries must be >= 1")
        self.index_params.validate(self.index_kind)

    def epsilon_for_level(self, level: int) -> int:
        """Error bound used when building a table at ``level`` (1-based)."""
        if self.per_level_epsilon:
            idx = min(level - 1, len(self.per_level_epsilon) - 1)
            return self.per_level_epsilon[idx]
        return self.index_params.epsilon


def levels_needed(n_entries: int, entry_size: int, write_buffer_bytes: int, size_ratio: int) -> int:
    """Level count for storing ``n_entries``: smallest L with T^L * F >= N * e, minimum 1.

    Computed with exact integer arithmetic (no float log) so boundary cases
    like N*e/F being an exact power of T come out right.
    """
    if min(n_entries, entry_size, write_buffer_bytes) < 1:
        raise InvalidConfigError("n_entries, entry_size and write_buffer_bytes must be >= 1")
    if size_ratio < 2:
        raise InvalidConfigError("size_ratio must be >= 2")
    total = n_entries * entry_size
    level, cap = 0, write_buffer_bytes
    while cap < total:
        level += 1
        cap *= size_ratio
    return max(level, 1)


def level_capacity_bytes(level: int, config: EngineConfig) -> int:
    """Byte capacity of a 1-based level: F * T^level."""
    if level < 1:
        raise InvalidConfigError("level must be >= 1")
    cap = config.write_buffer_bytes * config.size_ratio**level
    if cap > _MAX_BYTES:
        raise InvalidConfigError(f"level {level} capacity overflows the 63-bit byte range")
    return cap


def boundary_blocks(position_boundary: int, entry_size: int, block_bytes: int) -> int:
    """Worst-case block count for fetching one predicted position range.

    ``ceil(boundary * entry_size / block_bytes) + 1``; the +1 absorbs
    misalignment of the range start against block boundaries.
    """
    if min(position_boundary, entry_size, block_bytes) < 1:
        raise InvalidConfigError("boundary_blocks arguments must be >= 1")
    span = position_boundary * entry_size
    return (span + block_bytes - 1) // block_bytes + 1
