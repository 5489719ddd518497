"""Counters, phase timers, and report structures for the benchmark harness.

Wall-clock fields are obviously machine-dependent; everything else (block
and byte counters, op counts, memory accounting) is a pure function of the
configuration and seeds, and the acceptance suite pins those down exactly.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field


@dataclass
class CompactionRecord:
    """Time breakdown of one compaction (or flush) in nanoseconds."""

    level_from: int
    level_to: int
    read_ns: int = 0
    merge_write_ns: int = 0
    train_ns: int = 0
    index_write_ns: int = 0
    total_ns: int = 0
    input_tables: int = 0
    output_tables: int = 0


class Metrics:
    """Mutable sink threaded through the engine and table read paths."""

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self.t_table_lookup_ns = 0
        self.t_predict_ns = 0
        self.t_io_ns = 0
        self.t_bsearch_ns = 0
        self.blocks_read = 0
        self.bytes_read = 0
        self.op_counts: dict[str, int] = defaultdict(int)
        self.op_latencies_ns: list[int] = []
        self.per_level_reads: dict[int, int] = defaultdict(int)
        self.per_level_read_ns: dict[int, int] = defaultdict(int)
        self.compactions: list[CompactionRecord] = []
        self.flushes: list[CompactionRecord] = []

    def count_blocks(self, n_blocks: int, block_bytes: int) -> None:
        self.blocks_read += n_blocks
        self.bytes_read += n_blocks * block_bytes

    def phase_sum_ns(self) -> int:
        return (self.t_table_lookup_ns + self.t_predict_ns
                + self.t_io_ns + self.t_bsearch_ns)

    def compaction_totals(self) -> dict[str, int]:
        out = {"count": len(self.compactions), "total_ns": 0, "read_ns": 0,
               "merge_write_ns": 0, "train_ns": 0, "index_write_ns": 0}
        for rec in self.compactions:
            out["total_ns"] += rec.total_ns
            out["read_ns"] += rec.read_ns
            out["merge_write_ns"] += rec.merge_write_ns
            out["train_ns"] += rec.train_ns
            out["index_write_ns"] += rec.index_write_ns
        return out


@dataclass
class MemoryAccounting:
    index_bytes: int = 0
    bloom_bytes: int = 0
    memtable_bytes: int = 0
    per_level_index_bytes: dict[int, int] = field(default_factory=dict)


@dataclass
class MetricsReport:
    """One benchmark row: configuration echo plus measured aggregates."""

    index_kind: str = ""
    boundary: int = 0
    epsilon: int = 0
    sstable_mb: float = 0.0
    granularity: str = ""
    dataset: str = ""
    workload: str = ""
    n_ops: int = 0
    mean_us: float = 0.0
    p50_us: float = 0.0
    p99_us: float = 0.0
    t_table_lookup_ns: int = 0
    t_predict_ns: int = 0
    t_io_ns: int = 0
    t_bsearch_ns: int = 0
    blocks_per_op: float = 0.0
    bytes_per_op: float = 0.0
    index_bytes: int = 0
    bloom_bytes: int = 0
    compaction_total_ms: float = 0.0
    compaction_train_ms: float = 0.0
    compaction_index_write_ms: float = 0.0
    per_level_read_share: str = ""
    per_level_index_bytes: str = ""
    status: str = "ok"

    CSV_COLUMNS = (
        "index_kind", "boundary", "epsilon", "sstable_mb", "granularity",
        "dataset", "workload", "n_ops", "mean_us", "p50_us", "p99_us",
        "t_table_lookup_ns", "t_predict_ns", "t_io_ns", "t_bsearch_ns",
        "blocks_per_op", "bytes_per_op", "index_bytes", "bloom_bytes",
        "compaction_total_ms", "compaction_train_ms", "compaction_index_write_ms",
        "per_level_read_share", "per_level_index_bytes", "status",
    )

    # Columns that must be bit-reproducible across runs with equal seeds.
    LOGICAL_COLUMNS = (
        "index_kind", "boundary", "epsilon", "sstable_mb", "granularity",
        "dataset", "workload", "n_ops", "blocks_per_op", "bytes_per_op",
        "index_bytes", "bloom_bytes", "per_level_index_bytes", "status",
    )

    def csv_values(self) -> list[str]:
        return [_fmt(getattr(self, col)) for col in self.CSV_COLUMNS]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def percentile_us(latencies_ns: list[int], q: float) -> float:
    """Nearest-rank percentile, reported in microseconds."""
    if not latencies_ns:
        return 0.0
    ordered = sorted(latencies_ns)
    rank = min(int(q * len(ordered)), len(ordered) - 1)
    return ordered[rank] / 1000.0
