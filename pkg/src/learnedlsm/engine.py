"""Leveled LSM-tree engine: write buffer, flush, compaction, reads.

Each level holds tables with pairwise-disjoint key ranges (a partitioned
sorted run); flushes merge the write buffer straight into level 1.  Writers
are single-threaded by contract; readers may run concurrently against the
version snapshot installed under ``_lock``.

Compaction comes in two shapes.  Partial compaction (the default) picks one
victim table per round via a per-level round-robin cursor and merges it with
the overlapping tables below.  Full compaction merges an entire level; it is
mandatory for per-level index granularity, where every level is one table
spanning the whole run so a single index covers it.
"""

from __future__ import annotations

import bisect
import heapq
import os
import threading
import time

import numpy as np

from .core import (
    KIND_DELETE,
    KIND_PUT,
    CompactionMode,
    EngineConfig,
    Granularity,
    MAX_SEQ,
    level_capacity_bytes,
    pack_word,
)
from .errors import InvalidInputError, StorageError
from .metrics import CompactionRecord, MemoryAccounting, Metrics
from .sstable import (
    TOMBSTONE,
    TableHandle,
    TableIterator,
    build_table,
    entry_dtype,
    open_table,
    read_all_entries,
    table_get,
    table_seek,
)

MANIFEST = "MANIFEST"


class MemTable:
    """Ordered-on-demand write buffer; last write per key wins."""

    def __init__(self, entry_size: int):
        self.data: dict[int, tuple[int, int, bytes]] = {}
        self.entry_size = entry_size
        self._sorted_keys: list[int] | None = None

    def put(self, key: int, seq: int, kind: int, value: bytes) -> None:
        self.data[key] = (seq, kind, value)
        self._sorted_keys = None

    def get(self, key: int):
        return self.data.get(key)

    def __len__(self) -> int:
        return len(self.data)

    @property
    def approx_bytes(self) -> int:
        return len(self.data) * self.entry_size

    def sorted_keys(self) -> list[int]:
        if self._sorted_keys is None:
            self._sorted_keys = sorted(self.data)
        return self._sorted_keys

    def to_records(self, value_size: int) -> np.ndarray:
        keys = self.sorted_keys()
        n = len(keys)
        rec = np.empty(n, dtype=entry_dtype(value_size))
        zero = bytes(value_size)
        words = np.empty(n, dtype=np.uint64)
        chunks = []
        data = self.data
        for i, k in enumerate(keys):
            seq, kind, value = data[k]
            words[i] = (seq << 1) | kind
            chunks.append(value if kind == KIND_PUT else zero)
        rec["key"] = keys
        rec["word"] = words
        rec["value"] = np.frombuffer(b"".join(chunks), dtype=np.uint8).reshape(n, value_size)
        return rec


class LevelState:
    """Tables of one level, sorted by min_key with disjoint ranges."""

    def __init__(self, level: int, tables: list[TableHandle] | None = None):
        self.level = level
        self.tables = tables or []
        self.cursor_key = 0
        self._refresh()

    def _refresh(self) -> None:
        self.tables.sort(key=lambda t: t.min_key)
        self.min_keys = [t.min_key for t in self.tables]
        self.max_keys = [t.max_key for t in self.tables]

    def data_bytes(self) -> int:
        return sum(t.data_bytes for t in self.tables)

    def candidate(self, key: int) -> TableHandle | None:
        j = bisect.bisect_right(self.min_keys, key) - 1
        if j >= 0 and key <= self.max_keys[j]:
            return self.tables[j]
        return None

    def overlapping(self, lo: int, hi: int) -> list[TableHandle]:
        out = []
        for t in self.tables:
            if t.min_key <= hi and t.max_key >= lo:
                out.append(t)
        return out


class LsmEngine:
    """Embeddable key-value store with pluggable per-table learned indexes."""

    def __init__(self, config: EngineConfig, recover: bool = False):
        config.validate()
        self.config = config
        self.metrics = Metrics()
        self.memtable = MemTable(config.entry_size)
        self.levels: list[LevelState] = []
        self._next_seq = 0
        self._next_file_id = 0
        self._lock = threading.Lock()
        self._open = True
        os.makedirs(config.data_dir, exist_ok=True)
        if recover:
            self._recover()
        else:
            self._write_manifest()

    # ------------------------------------------------------------------ writes

    def put(self, key: int, value: bytes) -> None:
        if len(value) != self.config.value_size:
            raise InvalidInputError(
                f"value must be exactly {self.config.value_size} bytes, got {len(value)}"
            )
        self._write(key, KIND_PUT, value)

    def delete(self, key: int) -> None:
        self._write(key, KIND_DELETE, b"")

    def _write(self, key: int, kind: int, value: bytes) -> None:
        self._check_open()
        if not 0 <= key < 2**64:
            raise InvalidInputError(f"key {key} outside the unsigned 64-bit range")
        seq = self._next_seq
        if seq > MAX_SEQ:
            raise InvalidInputError("sequence space exhausted")
        self._next_seq += 1
        self.memtable.put(key, seq, kind, value)
        self.metrics.op_counts["put" if kind == KIND_PUT else "delete"] += 1
        if self.memtable.approx_bytes >= self.config.write_buffer_bytes:
            self.flush()

    # ------------------------------------------------------------ flush/compact

    def flush(self) -> None:
        """Merge the write buffer into level 1 and re-slice, then compact."""
        self._check_open()
        if not len(self.memtable):
            raise InvalidInputError("flush on an empty write buffer")
        record = CompactionRecord(level_from=0, level_to=1)
        t_start = time.perf_counter_ns()

        fresh = self.memtable.to_records(self.config.value_size)
        level1 = self._level(1)
        if self.config.granularity is Granularity.PER_LEVEL:
            victims = list(level1.tables)
        else:
            victims = level1.overlapping(int(fresh["key"][0]), int(fresh["key"][-1]))
        t0 = time.perf_counter_ns()
        parts = [read_all_entries(t, self.config.value_size) for t in victims]
        record.read_ns = time.perf_counter_ns() - t0
        merged = self._merge([fresh] + parts, target_level=1)
        new_tables = self._write_run(merged, level=1, record=record)

        with self._lock:
            keep = [t for t in level1.tables if t not in victims]
            level1.tables = keep + new_tables
            level1._refresh()
            self.memtable = MemTable(self.config.entry_size)
            self._write_manifest()
        self._drop_tables(victims)
        record.total_ns = time.perf_counter_ns() - t_start
        record.merge_write_ns = (record.total_ns - record.read_ns
                                 - record.train_ns - record.index_write_ns)
        record.input_tables = len(victims)
        record.output_tables = len(new_tables)
        self.metrics.flushes.append(record)
        self.maybe_compact()

    def maybe_compact(self) -> list[CompactionRecord]:
        """Compact while any level exceeds its byte capacity."""
        self._check_open()
        records = []
        while True:
            over = None
            for state in self.levels:
                if state.tables and state.data_bytes() > level_capacity_bytes(
                        state.level, self.config):
                    over = state
                    break
            if over is None:
                break
            records.append(self._compact_level(over))
        return records

    def _compact_level(self, state: LevelState) -> CompactionRecord:
        record = CompactionRecord(level_from=state.level, level_to=state.level + 1)
        t_start = time.perf_counter_ns()
        below = self._level(state.level + 1)

        if self.config.compaction is CompactionMode.FULL:
            victims = list(state.tables)
            overlaps = list(below.tables)
        else:
            j = bisect.bisect_left(state.min_keys, state.cursor_key)
            if j >= len(state.tables):
                j = 0
            victim = state.tables[j]
            state.cursor_key = victim.max_key + 1
            victims = [victim]
            overlaps = below.overlapping(victim.min_key, victim.max_key)

        t0 = time.perf_counter_ns()
        parts = [read_all_entries(t, self.config.value_size) for t in victims + overlaps]
        record.read_ns = time.perf_counter_ns() - t0
        merged = self._merge(parts, target_level=state.level + 1)
        new_tables = self._write_run(merged, level=state.level + 1, record=record)

        with self._lock:
            state.tables = [t for t in state.tables if t not in victims]
            state._refresh()
            below.tables = [t for t in below.tables if t not in overlaps] + new_tables
            below._refresh()
            self._write_manifest()
        self._drop_tables(victims + overlaps)
        record.total_ns = time.perf_counter_ns() - t_start
        record.merge_write_ns = (record.total_ns - record.read_ns
                                 - record.train_ns - record.index_write_ns)
        record.input_tables = len(victims) + len(overlaps)
        record.output_tables = len(new_tables)
        self.metrics.compactions.append(record)
        return record

    def _merge(self, parts: list[np.ndarray], target_level: int) -> np.ndarray:
        merged = parts[0] if len(parts) == 1 else np.concatenate(parts)
        if merged.size == 0:
            return merged
        order = np.lexsort((merged["word"], merged["key"]))
        merged = merged[order]
        keep = np.empty(merged.size, dtype=bool)
        keep[:-1] = merged["key"][:-1] != merged["key"][1:]
        keep[-1] = True
        merged = merged[keep]
        if self._is_last_populated(target_level):
            merged = merged[(merged["word"] & np.uint64(1)) == 0]
        return merged

    def _is_last_populated(self, level: int) -> bool:
        """True when no level deeper than ``level`` holds data, so tombstones
        merging into it shadow nothing and can be dropped."""
        for state in self.levels:
            if state.level > level and state.tables:
                return False
        return True

    def _write_run(self, merged: np.ndarray, level: int,
                   record: CompactionRecord) -> list[TableHandle]:
        if merged.size == 0:
            return []
        if self.config.granularity is Granularity.PER_LEVEL:
            per_table = merged.size
        else:
            per_table = max(self.config.sstable_target_bytes // self.config.entry_size, 1)
        out = []
        for start in range(0, merged.size, per_table):
            chunk = np.ascontiguousarray(merged[start:start + per_table])
            out.append(build_table(chunk, self.config, level, self._take_file_id(), record))
        return out

    def _take_file_id(self) -> int:
        fid = self._next_file_id
        self._next_file_id += 1
        return fid

    def _level(self, level: int) -> LevelState:
        while len(self.levels) < level:
            self.levels.append(LevelState(len(self.levels) + 1))
        return self.levels[level - 1]

    def _drop_tables(self, tables: list[TableHandle]) -> None:
        for t in tables:
            t.close()
            try:
                os.unlink(t.path)
            except OSError:
                pass

    # ------------------------------------------------------------------- reads

    def get(self, key: int):
        """Newest visible value for ``key``, or None."""
        self._check_open()
        metrics = self.metrics
        t_op = time.perf_counter_ns()
        hit = self.memtable.get(key)
        if hit is not None:
            seq, kind, value = hit
            t_end = time.perf_counter_ns()
            metrics.t_table_lookup_ns += t_end - t_op
            metrics.op_counts["get"] += 1
            metrics.op_latencies_ns.append(t_end - t_op)
            return value if kind == KIND_PUT else None

        result = None
        with self._lock:
            levels = list(self.levels)
        for state in levels:
            t0 = time.perf_counter_ns()
            handle = state.candidate(key)
            metrics.t_table_lookup_ns += time.perf_counter_ns() - t0
            if handle is None:
                continue
            t1 = time.perf_counter_ns()
            found = table_get(handle, key, metrics)
            dt = time.perf_counter_ns() - t1
            metrics.per_level_reads[state.level] += 1
            metrics.per_level_read_ns[state.level] += dt
            if found is None:
                continue
            if found is not TOMBSTONE:
                result = found
            break
        t_end = time.perf_counter_ns()
        metrics.op_counts["get"] += 1
        metrics.op_latencies_ns.append(t_end - t_op)
        return result

    def scan(self, from_key: int, n: int):
        """Up to ``n`` live entries with key >= from_key, in key order."""
        self._check_open()
        if n < 0:
            raise InvalidInputError("scan count must be >= 0")
        metrics = self.metrics
        t_op = time.perf_counter_ns()
        with self._lock:
            levels = list(self.levels)
        sources = [self._memtable_source(from_key)]
        for state in levels:
            if state.tables:
                sources.append(self._level_source(state, from_key, metrics))
        out = []
        last_key = None
        for key, _negseq, kind, value in heapq.merge(*sources):
            if key == last_key:
                continue
            last_key = key
            if kind == KIND_DELETE:
                continue
            out.append((key, value))
            if len(out) >= n:
                break
        t_end = time.perf_counter_ns()
        metrics.op_counts["scan"] += 1
        metrics.op_latencies_ns.append(t_end - t_op)
        return out

    def _memtable_source(self, from_key: int):
        keys = self.memtable.sorted_keys()
        data = self.memtable.data
        for i in range(bisect.bisect_left(keys, from_key), len(keys)):
            key = keys[i]
            seq, kind, value = data[key]
            yield (key, -seq, kind, value)

    def _level_source(self, state: LevelState, from_key: int, metrics: Metrics):
        j = bisect.bisect_left(state.max_keys, from_key)
        for t in state.tables[j:]:
            it = table_seek(t, from_key, metrics)
            while not it.exhausted():
                key, seq, kind, value = it.next()
                yield (key, -seq, kind, bytes(value))

    # ------------------------------------------------------------ housekeeping

    def stats(self) -> MemoryAccounting:
        acc = MemoryAccounting()
        acc.memtable_bytes = self.memtable.approx_bytes
        for state in self.levels:
            level_bytes = sum(t.index.memory_bytes() for t in state.tables)
            acc.per_level_index_bytes[state.level] = level_bytes
            acc.index_bytes += level_bytes
            acc.bloom_bytes += sum(t.bloom.memory_bytes() for t in state.tables)
        return acc

    def level_table_counts(self) -> dict[int, int]:
        return {s.level: len(s.tables) for s in self.levels}

    def close(self) -> None:
        if not self._open:
            return
        self._open = False
        for state in self.levels:
            for t in state.tables:
                t.close()

    def _check_open(self) -> None:
        if not self._open:
            raise InvalidInputError("engine is closed")

    # --------------------------------------------------------------- manifest

    def _write_manifest(self) -> None:
        path = os.path.join(self.config.data_dir, MANIFEST)
        tmp = path + ".tmp"
        lines = [f"# seq={self._next_seq} file_id={self._next_file_id}"]
        for state in self.levels:
            for t in state.tables:
                lines.append(f"{t.level} {t.file_id} {t.min_key} {t.max_key} {t.entry_count}")
        try:
            with open(tmp, "w") as fh:
                fh.write("\n".join(lines) + "\n")
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageError(f"cannot write manifest: {exc}") from exc

    def _recover(self) -> None:
        path = os.path.join(self.config.data_dir, MANIFEST)
        if not os.path.exists(path):
            raise StorageError(f"no manifest under {self.config.data_dir}")
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        by_level: dict[int, list[TableHandle]] = {}
        for ln in lines:
            if ln.startswith("#"):
                for part in ln[1:].split():
                    name, _, value = part.partition("=")
                    if name == "seq":
                        self._next_seq = int(value)
                    elif name == "file_id":
                        self._next_file_id = int(value)
                continue
            level_s, fid_s, *_rest = ln.split()
            level, fid = int(level_s), int(fid_s)
            tpath = os.path.join(self.config.data_dir, f"L{level}", f"{fid:06d}.lit")
            by_level.setdefault(level, []).append(
                open_table(tpath, fid, level, self.config.block_bytes))
        for level in range(1, max(by_level, default=0) + 1):
            self._level(level).tables = by_level.get(level, [])
            self._level(level)._refresh()
