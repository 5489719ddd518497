"""Immutable on-disk tables: builder, block-granular reader, point get, seek.

File layout (little-endian), written in one forward pass:

    [data region: entry_count x entry_size packed entries]
    [serialized index]
    [bloom: bit_count u64, k u32, bit bytes]
    [footer, 64 bytes at EOF-64]

The footer carries the region offsets, entry count, key range, entry size
and a magic tag, so reopening a table costs three positioned reads.

Point lookups read a fixed-size aligned block window per probe: exactly
``boundary_blocks(position_boundary, entry_size, block_bytes)`` blocks
starting at the block containing the range's first byte.  The window always
covers the predicted range, the logical block counter becomes a pure
function of the configuration, and the per-probe I/O cost is the paper-shaped
bound rather than an alignment lottery.  Reads past EOF return short data
(the window may overlap the index/bloom trailer); the counter still counts
the requested window.
"""

from __future__ import annotations

import math
import os
import struct
import time

import numpy as np

from .core import EngineConfig, boundary_blocks, unpack_word
from .errors import CorruptTableError, InvalidInputError, StorageError
from .indexes import LearnedIndex, build_index, deserialize_index, serialize_index
from .metrics import CompactionRecord, Metrics

FOOTER = struct.Struct("<QQIQIQQQI4s")
FOOTER_MAGIC = b"LSMT"
FOOTER_BYTES = FOOTER.size
assert FOOTER_BYTES == 64

# Sentinel distinguishing "key present but deleted" from "key absent".
TOMBSTONE = object()

_MASK64 = (1 << 64) - 1
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_GOLDEN = 0x9E3779B97F4A7C15


def entry_dtype(value_size: int) -> np.dtype:
    return np.dtype([("key", "<u8"), ("word", "<u8"), ("value", "u1", (value_size,))])


def _mix64_scalar(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(_GOLDEN))
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return x


class BloomFilter:
    """Double-hashing bloom filter over 64-bit mixed keys; no false negatives."""

    def __init__(self, bits: np.ndarray, m_bits: int, k: int):
        self.bits = bits
        self.m_bits = m_bits
        self.k = k

    @classmethod
    def build(cls, keys: np.ndarray, bits_per_key: int) -> "BloomFilter":
        n = int(keys.size)
        m_bits = max(int(math.ceil(bits_per_key * n)), 8)
        k = max(int(round(bits_per_key * math.log(2))), 1)
        bits = np.zeros((m_bits + 7) // 8, dtype=np.uint8)
        h1 = _mix64_array(np.asarray(keys, dtype=np.uint64).copy())
        h2 = _mix64_array(np.asarray(keys, dtype=np.uint64) ^ np.uint64(_GOLDEN))
        h2 |= np.uint64(1)
        for i in range(k):
            idx = (h1 + np.uint64(i) * h2) % np.uint64(m_bits)
            np.bitwise_or.at(bits, (idx >> np.uint64(3)).astype(np.int64),
                             np.left_shift(np.uint8(1), (idx & np.uint64(7)).astype(np.uint8)))
        return cls(bits, m_bits, k)

    def may_contain(self, key: int) -> bool:
        h1 = _mix64_scalar(key)
        h2 = _mix64_scalar(key ^ _GOLDEN) | 1
        bits = self.bits
        m = self.m_bits
        for i in range(self.k):
            idx = ((h1 + i * h2) & _MASK64) % m
            if not bits[idx >> 3] & (1 << (idx & 7)):
                return False
        return True

    def memory_bytes(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        return struct.pack("<QI", self.m_bits, self.k) + self.bits.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BloomFilter":
        if len(raw) < 12:
            raise CorruptTableError("bloom region truncated")
        m_bits, k = struct.unpack_from("<QI", raw, 0)
        bits = np.frombuffer(raw, dtype=np.uint8, offset=12).copy()
        if bits.size != (m_bits + 7) // 8:
            raise CorruptTableError("bloom bit array length mismatch")
        return cls(bits, m_bits, k)


class TableHandle:
    """One open immutable table: pinned index + bloom, positioned-read file."""

    def __init__(self, path: str, file_id: int, level: int, index: LearnedIndex,
                 bloom: BloomFilter, entry_count: int, entry_size: int,
                 min_key: int, max_key: int, block_bytes: int, data_offset: int = 0):
        self.path = path
        self.file_id = file_id
        self.level = level
        self.index = index
        self.bloom = bloom
        self.entry_count = entry_count
        self.entry_size = entry_size
        self.min_key = min_key
        self.max_key = max_key
        self.block_bytes = block_bytes
        self.data_offset = data_offset
        self.window_blocks = boundary_blocks(index.position_boundary(), entry_size, block_bytes)
        try:
            self._fd = os.open(path, os.O_RDONLY)
            self.file_size = os.fstat(self._fd).st_size
        except OSError as exc:
            raise StorageError(f"cannot open table {path}: {exc}") from exc

    @property
    def data_bytes(self) -> int:
        return self.entry_count * self.entry_size

    def close(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def __repr__(self) -> str:
        return (f"TableHandle(L{self.level}/{self.file_id:06d}, n={self.entry_count}, "
                f"keys=[{self.min_key}, {self.max_key}])")


def build_table(entries: np.ndarray, config: EngineConfig, level: int, file_id: int,
                record: CompactionRecord | None = None) -> TableHandle:
    """Write one table from a sorted, deduplicated entry array and return a
    live handle.  Training and index-write times land in ``record`` if given."""
    if entries.size == 0:
        raise InvalidInputError("cannot build an empty table")
    keys = np.ascontiguousarray(entries["key"])
    if keys.size > 1 and not np.all(keys[1:] > keys[:-1]):
        raise InvalidInputError("table entries must be strictly increasing by key")

    params = config.index_params
    epsilon = config.epsilon_for_level(level)
    if epsilon != params.epsilon:
        params = type(params)(epsilon=epsilon, epsilon_recursive=params.epsilon_recursive,
                              radix_bits=params.radix_bits, leaf_count=params.leaf_count,
                              fp_block_bytes=params.fp_block_bytes)

    t0 = time.perf_counter_ns()
    index = build_index(config.index_kind, params, keys, entry_size=config.entry_size)
    train_ns = time.perf_counter_ns() - t0

    bloom = BloomFilter.build(keys, config.bloom_bits_per_key)

    level_dir = os.path.join(config.data_dir, f"L{level}")
    os.makedirs(level_dir, exist_ok=True)
    path = os.path.join(level_dir, f"{file_id:06d}.lit")
    index_write_ns = 0
    try:
        with open(path, "wb") as fh:
            fh.write(entries.tobytes())
            index_offset = fh.tell()
            t0 = time.perf_counter_ns()
            index_blob = serialize_index(index)
            fh.write(index_blob)
            index_write_ns = time.perf_counter_ns() - t0
            bloom_offset = fh.tell()
            bloom_blob = bloom.to_bytes()
            fh.write(bloom_blob)
            fh.write(FOOTER.pack(0, index_offset, len(index_blob), bloom_offset,
                                 len(bloom_blob), entries.size, int(keys[0]),
                                 int(keys[-1]), config.entry_size, FOOTER_MAGIC))
    except OSError as exc:
        raise StorageError(f"cannot write table {path}: {exc}") from exc

    if record is not None:
        record.train_ns += train_ns
        record.index_write_ns += index_write_ns
    return TableHandle(path, file_id, level, index, bloom, int(entries.size),
                       config.entry_size, int(keys[0]), int(keys[-1]), config.block_bytes)


def open_table(path: str, file_id: int, level: int, block_bytes: int) -> TableHandle:
    """Reopen a table written by build_table: footer, then index, then bloom."""
    try:
        fd = os.open(path, os.O_RDONLY)
        try:
            size = os.fstat(fd).st_size
            if size < FOOTER_BYTES:
                raise CorruptTableError(f"{path}: shorter than a footer")
            raw = os.pread(fd, FOOTER_BYTES, size - FOOTER_BYTES)
            (data_offset, index_offset, index_len, bloom_offset, bloom_len,
             entry_count, min_key, max_key, entry_size, magic) = FOOTER.unpack(raw)
            if magic != FOOTER_MAGIC:
                raise CorruptTableError(f"{path}: bad footer magic")
            index = deserialize_index(os.pread(fd, index_len, index_offset))
            bloom = BloomFilter.from_bytes(os.pread(fd, bloom_len, bloom_offset))
        finally:
            os.close(fd)
    except OSError as exc:
        raise StorageError(f"cannot open table {path}: {exc}") from exc
    return TableHandle(path, file_id, level, index, bloom, entry_count, entry_size,
                       min_key, max_key, block_bytes, data_offset)


def read_block_span(handle: TableHandle, first_block: int, n_blocks: int,
                    metrics: Metrics | None = None) -> bytes:
    """Positioned read of whole blocks; short at EOF, never via a shared cursor."""
    if n_blocks == 0:
        return b""
    if first_block < 0 or n_blocks < 0:
        raise InvalidInputError("block span out of range")
    offset = first_block * handle.block_bytes
    if offset >= handle.file_size:
        raise InvalidInputError(
            f"block {first_block} starts at {offset}, beyond file size {handle.file_size}"
        )
    try:
        data = os.pread(handle._fd, n_blocks * handle.block_bytes, offset)
    except OSError as exc:
        raise StorageError(f"read failed on {handle.path}: {exc}") from exc
    if metrics is not None:
        metrics.count_blocks(n_blocks, handle.block_bytes)
    return data


def _key_at(span: bytes, span_start: int, pos: int, entry_size: int) -> int:
    off = pos * entry_size - span_start
    return int.from_bytes(span[off:off + 8], "little")


def _read_window(handle: TableHandle, lo: int, metrics: Metrics | None) -> tuple[bytes, int]:
    first_block = (handle.data_offset + lo * handle.entry_size) // handle.block_bytes
    span = read_block_span(handle, first_block, handle.window_blocks, metrics)
    return span, first_block * handle.block_bytes


def table_get(handle: TableHandle, key: int, metrics: Metrics | None = None):
    """Point lookup: bloom, predict, one block-window read, in-span binary search.

    Returns the value bytes, the TOMBSTONE sentinel for a deleted key, or
    None when the key is absent.
    """
    t0 = time.perf_counter_ns()
    positive = handle.bloom.may_contain(key)
    t1 = time.perf_counter_ns()
    if metrics is not None:
        metrics.t_table_lookup_ns += t1 - t0
    if not positive:
        return None

    t0 = time.perf_counter_ns()
    rng = handle.index.predict(key)
    t1 = time.perf_counter_ns()
    span, span_start = _read_window(handle, rng.lo, metrics)
    t2 = time.perf_counter_ns()

    es = handle.entry_size
    lo, hi = rng.lo, rng.hi
    found = -1
    while lo <= hi:
        mid = (lo + hi) // 2
        k = _key_at(span, span_start, mid, es)
        if k < key:
            lo = mid + 1
        elif k > key:
            hi = mid - 1
        else:
            found = mid
            break
    t3 = time.perf_counter_ns()
    if metrics is not None:
        metrics.t_predict_ns += t1 - t0
        metrics.t_io_ns += t2 - t1
        metrics.t_bsearch_ns += t3 - t2
    if found < 0:
        return None
    off = found * es - span_start
    raw = span[off:off + es]
    if len(raw) < es:
        raise CorruptTableError(f"{handle.path}: entry {found} extends past data")
    word = int.from_bytes(raw[8:16], "little")
    _, kind = unpack_word(word)
    if kind:
        return TOMBSTONE
    return raw[16:]


def _bisect_positions(handle: TableHandle, key: int, lo: int, hi: int,
                      metrics: Metrics | None) -> int:
    """Lower bound over [lo, hi) reading one or two blocks per probe; used only
    when a seek's predicted window provably may not bracket the target."""
    es, bb = handle.entry_size, handle.block_bytes
    while lo < hi:
        mid = (lo + hi) // 2
        start = (handle.data_offset + mid * es) // bb
        end = (handle.data_offset + (mid + 1) * es - 1) // bb
        span = read_block_span(handle, start, end - start + 1, metrics)
        k = _key_at(span, start * bb, mid, es)
        if k < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


class TableIterator:
    """Forward iterator over one table, fetching one block per boundary cross."""

    def __init__(self, handle: TableHandle, pos: int, metrics: Metrics | None = None):
        self.handle = handle
        self.pos = pos
        self.metrics = metrics
        self._buf = b""
        self._buf_start = 0

    def exhausted(self) -> bool:
        return self.pos >= self.handle.entry_count

    def _prime(self, span: bytes, span_start: int) -> None:
        self._buf = span
        self._buf_start = span_start

    def _ensure_current(self) -> None:
        h = self.handle
        es, bb = h.entry_size, h.block_bytes
        need_end = h.data_offset + (self.pos + 1) * es
        need_start = h.data_offset + self.pos * es
        if need_start < self._buf_start:
            # jumped backwards relative to the buffer (fresh iterator): reload
            first = need_start // bb
            self._prime(read_block_span(h, first, 1, self.metrics), first * bb)
            need_end = h.data_offset + (self.pos + 1) * es
        while self._buf_start + len(self._buf) < need_end:
            next_block = (self._buf_start + len(self._buf)) // bb
            if not self._buf:
                next_block = need_start // bb
                self._buf_start = next_block * bb
            chunk = read_block_span(h, next_block, 1, self.metrics)
            if not chunk:
                raise CorruptTableError(f"{h.path}: data region ends early")
            self._buf += chunk
            # Bound the rolling buffer: drop blocks before the current entry.
            keep_from = (need_start // bb) * bb
            if keep_from > self._buf_start:
                self._buf = self._buf[keep_from - self._buf_start:]
                self._buf_start = keep_from

    def peek(self):
        h = self.handle
        self._ensure_current()
        es = h.entry_size
        off = h.data_offset + self.pos * es - self._buf_start
        raw = self._buf[off:off + es]
        key = int.from_bytes(raw[:8], "little")
        seq, kind = unpack_word(int.from_bytes(raw[8:16], "little"))
        return key, seq, kind, raw[16:]

    def next(self):
        item = self.peek()
        self.pos += 1
        return item


def table_seek(handle: TableHandle, key: int, metrics: Metrics | None = None) -> TableIterator:
    """Iterator positioned at the first entry with key >= target."""
    if key > handle.max_key:
        return TableIterator(handle, handle.entry_count, metrics)
    if key <= handle.min_key:
        return TableIterator(handle, 0, metrics)

    t0 = time.perf_counter_ns()
    rng = handle.index.predict(key)
    t1 = time.perf_counter_ns()
    span, span_start = _read_window(handle, rng.lo, metrics)
    t2 = time.perf_counter_ns()
    if metrics is not None:
        metrics.t_predict_ns += t1 - t0
        metrics.t_io_ns += t2 - t1

    es = handle.entry_size
    lo, hi = rng.lo, rng.hi + 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _key_at(span, span_start, mid, es) < key:
            lo = mid + 1
        else:
            hi = mid
    # The predicted window brackets every built key; for other targets the
    # boundary outcomes below are the only cases where the true lower bound
    # can sit outside it.
    if lo == rng.lo and rng.lo > 0:
        lo = _bisect_positions(handle, key, 0, rng.lo + 1, metrics)
    elif lo == rng.hi + 1 and rng.hi + 1 < handle.entry_count:
        lo = _bisect_positions(handle, key, rng.hi + 1, handle.entry_count, metrics)

    it = TableIterator(handle, lo, metrics)
    if rng.lo <= lo <= rng.hi:
        it._prime(span, span_start)
    return it


def read_all_entries(handle: TableHandle, value_size: int) -> np.ndarray:
    """Whole data region as a structured array (compaction input path)."""
    raw = os.pread(handle._fd, handle.data_bytes, handle.data_offset)
    if len(raw) != handle.data_bytes:
        raise CorruptTableError(f"{handle.path}: data region truncated")
    return np.frombuffer(raw, dtype=entry_dtype(value_size))
