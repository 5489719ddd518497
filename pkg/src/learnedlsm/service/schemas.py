"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

import os

from pydantic import BaseModel, Field

from ..bench import ExperimentConfig
from ..core import CompactionMode, EngineConfig, Granularity, IndexKind, IndexParams
from ..metrics import MetricsReport
from ..workload import DatasetKind, DatasetSpec, KeyPick, WorkloadKind, WorkloadSpec


class DatasetModel(BaseModel):
    kind: str = "uniform"
    n: int = Field(default=100_000, ge=0)
    seed: int = 1
    pieces: int = Field(default=10, ge=1)
    path: str | None = None

    def to_spec(self) -> DatasetSpec:
        return DatasetSpec(kind=DatasetKind.parse(self.kind), n=self.n, seed=self.seed,
                           pieces=self.pieces, path=self.path)


class WorkloadModel(BaseModel):
    kind: str = "point"
    n_ops: int = Field(default=10_000, ge=0)
    seed: int = 1
    key_distribution: str = "uniform"
    range_len: int = Field(default=100, ge=1)

    def to_spec(self) -> WorkloadSpec:
        return WorkloadSpec(kind=WorkloadKind.parse(self.kind), n_ops=self.n_ops,
                            seed=self.seed,
                            key_distribution=KeyPick.parse(self.key_distribution),
                            range_len=self.range_len)


class BenchRequest(BaseModel):
    dataset: DatasetModel = Field(default_factory=DatasetModel)
    workload: WorkloadModel = Field(default_factory=WorkloadModel)
    index_kinds: list[str] = ["pgm"]
    boundaries: list[int] = [64]
    sstable_mbs: list[float] = [4.0]
    granularities: list[str] = ["file"]
    compaction: str = "partial"
    value_size: int = Field(default=100, ge=1)
    block_bytes: int = 4096
    size_ratio: int = 10
    write_buffer_mb: float = 1.0
    bloom_bits_per_key: int = 10
    per_level_epsilon: list[int] | None = None
    epsilon: int | None = None
    leaf_count: int | None = None
    repetitions: int = Field(default=1, ge=1)
    data_dir: str | None = None
    keep_data: bool = False

    def to_config(self, default_data_dir: str) -> ExperimentConfig:
        return ExperimentConfig(
            dataset=self.dataset.to_spec(),
            workload=self.workload.to_spec(),
            data_dir=self.data_dir or default_data_dir,
            index_kinds=tuple(IndexKind.parse(k) for k in self.index_kinds),
            boundaries=tuple(self.boundaries),
            sstable_mbs=tuple(self.sstable_mbs),
            granularities=tuple(Granularity.parse(g) for g in self.granularities),
            compaction=CompactionMode.parse(self.compaction),
            value_size=self.value_size,
            block_bytes=self.block_bytes,
            size_ratio=self.size_ratio,
            write_buffer_mb=self.write_buffer_mb,
            bloom_bits_per_key=self.bloom_bits_per_key,
            per_level_epsilon=tuple(self.per_level_epsilon) if self.per_level_epsilon else None,
            epsilon_override=self.epsilon,
            leaf_count_override=self.leaf_count,
            repetitions=self.repetitions,
            keep_data=self.keep_data,
        )


class ReportRow(BaseModel):
    index_kind: str
    boundary: int
    epsilon: int
    sstable_mb: float
    granularity: str
    dataset: str
    workload: str
    n_ops: int
    mean_us: float
    p50_us: float
    p99_us: float
    t_table_lookup_ns: int
    t_predict_ns: int
    t_io_ns: int
    t_bsearch_ns: int
    blocks_per_op: float
    bytes_per_op: float
    index_bytes: int
    bloom_bytes: int
    compaction_total_ms: float
    compaction_train_ms: float
    compaction_index_write_ms: float
    per_level_read_share: str
    per_level_index_bytes: str
    status: str

    @classmethod
    def from_report(cls, report: MetricsReport) -> "ReportRow":
        return cls(**{col: getattr(report, col) for col in MetricsReport.CSV_COLUMNS})

    def to_report(self) -> MetricsReport:
        return MetricsReport(**self.model_dump())


class BenchResponse(BaseModel):
    rows: list[ReportRow]


class VerifyRequest(BaseModel):
    n: int = Field(default=100_000, ge=100)
    seed: int = 7


class VerifyCheckModel(BaseModel):
    name: str
    passed: bool
    checked: int
    detail: str = ""


class VerifyResponse(BaseModel):
    passed: bool
    checks: list[VerifyCheckModel]


class GenDatasetRequest(BaseModel):
    dataset: DatasetModel = Field(default_factory=DatasetModel)
    out: str | None = None
    inline_limit: int = 10_000


class GenDatasetResponse(BaseModel):
    n: int
    min_key: int
    max_key: int
    checksum: int
    path: str | None = None
    keys: list[int] | None = None


class GenOpsRequest(BaseModel):
    dataset: DatasetModel = Field(default_factory=DatasetModel)
    workload: WorkloadModel = Field(default_factory=WorkloadModel)
    out: str | None = None
    inline_limit: int = 10_000


class GenOpsResponse(BaseModel):
    n_ops: int
    path: str | None = None
    ops: list[str] | None = None


class DbOpenRequest(BaseModel):
    name: str
    data_dir: str | None = None
    recover: bool = False
    value_size: int = Field(default=100, ge=1)
    index_kind: str = "pgm"
    epsilon: int = 16
    epsilon_recursive: int = 4
    radix_bits: int = 1
    leaf_count: int = 64
    boundary: int | None = None
    size_ratio: int = 10
    write_buffer_mb: float = 1.0
    sstable_mb: float = 4.0
    block_bytes: int = 4096
    bloom_bits_per_key: int = 10
    granularity: str = "file"
    compaction: str = "partial"

    def to_engine_config(self, default_root: str) -> EngineConfig:
        kind = IndexKind.parse(self.index_kind)
        fp_block = (self.boundary or 2 * self.epsilon) * (16 + self.value_size)
        params = IndexParams(epsilon=self.epsilon, epsilon_recursive=self.epsilon_recursive,
                             radix_bits=self.radix_bits, leaf_count=self.leaf_count,
                             fp_block_bytes=fp_block)
        import os

        return EngineConfig(
            data_dir=self.data_dir or os.path.join(default_root, "db", self.name),
            size_ratio=self.size_ratio,
            write_buffer_bytes=int(self.write_buffer_mb * 2**20),
            sstable_target_bytes=int(self.sstable_mb * 2**20),
            value_size=self.value_size,
            block_bytes=self.block_bytes,
            bloom_bits_per_key=self.bloom_bits_per_key,
            index_kind=kind,
            index_params=params,
            granularity=Granularity.parse(self.granularity),
            compaction=CompactionMode.parse(self.compaction),
        )


class PutRequest(BaseModel):
    key: int = Field(ge=0, lt=2**64)
    value_hex: str | None = None
    value_hash: int | None = None


class DeleteRequest(BaseModel):
    key: int = Field(ge=0, lt=2**64)


class GetResponse(BaseModel):
    found: bool
    value_hex: str | None = None


class ScanRequest(BaseModel):
    from_key: int = Field(default=0, ge=0, lt=2**64)
    count: int = Field(default=10, ge=0)


class ScanItem(BaseModel):
    key: int
    value_hex: str


class ScanResponse(BaseModel):
    items: list[ScanItem]


class DbStatsResponse(BaseModel):
    name: str
    entry_counts_per_level: dict[int, int]
    tables_per_level: dict[int, int]
    index_bytes: int
    bloom_bytes: int
    memtable_bytes: int
    per_level_index_bytes: dict[int, int]


class StatusResponse(BaseModel):
    ok: bool
    detail: str = ""
