"""Experiment driver: configure an engine, load a dataset, replay a workload,
and emit one metrics row per sweep point.

Logical metrics (block/byte counters, op counts, memory accounting) are exact
functions of the configuration and seeds; wall-clock fields are not.  With
``repetitions > 1`` the driver asserts the logical fields agree across runs
and reports median timings.
"""

from __future__ import annotations

import itertools
import os
import shutil
import statistics
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CompactionMode,
    EngineConfig,
    Granularity,
    IndexKind,
    IndexParams,
    boundary_blocks,
)
from .engine import LsmEngine
from .errors import InvalidConfigError, LsmError
from .indexes import build_index, deserialize_index, serialize_index
from .metrics import Metrics, MetricsReport, percentile_us
from .segmentation import segment_greedy, segment_optimal
from .workload import (
    DatasetKind,
    DatasetSpec,
    WorkloadKind,
    WorkloadSpec,
    derive_value,
    derive_values_array,
    gen_keys,
    gen_ops,
    value_hash_for_load,
    value_hashes_for_load,
)

DEFAULT_BOUNDARY = 64


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    data_dir: str = "bench-data"
    index_kinds: tuple[IndexKind, ...] = (IndexKind.PGM,)
    boundaries: tuple[int, ...] = (DEFAULT_BOUNDARY,)
    sstable_mbs: tuple[float, ...] = (4.0,)
    granularities: tuple[Granularity, ...] = (Granularity.PER_FILE,)
    compaction: CompactionMode = CompactionMode.PARTIAL
    value_size: int = 100
    block_bytes: int = 4096
    size_ratio: int = 10
    write_buffer_mb: float = 1.0
    bloom_bits_per_key: int = 10
    per_level_epsilon: tuple[int, ...] | None = None
    epsilon_override: int | None = None
    leaf_count_override: int | None = None
    repetitions: int = 1
    sweep_cap: int = 512
    keep_data: bool = False

    def sweep_points(self):
        points = list(itertools.product(self.index_kinds, self.boundaries,
                                        self.sstable_mbs, self.granularities))
        if not points:
            raise InvalidConfigError("sweep lists must be non-empty")
        if len(points) > self.sweep_cap:
            raise InvalidConfigError(
                f"sweep of {len(points)} points exceeds the cap of {self.sweep_cap}")
        for _, boundary, _, gran in points:
            if boundary < 2:
                raise InvalidConfigError("position boundary must be >= 2")
            if gran is Granularity.PER_LEVEL and self.compaction is not CompactionMode.FULL:
                raise InvalidConfigError(
                    "per-level index granularity requires full-level compaction "
                    "(set compaction='full')")
        return points


def params_for_boundary(kind: IndexKind, boundary: int, entry_size: int) -> IndexParams:
    """Map the unified position-boundary knob onto kind-specific parameters.

    Error-bounded kinds take epsilon = boundary / 2; the fence baseline sizes
    its blocks to hold exactly ``boundary`` entries; RMI doubles its leaf
    count at build time until the achieved boundary fits the target.
    """
    if boundary < 2:
        raise InvalidConfigError("position boundary must be >= 2")
    if kind is IndexKind.FENCE_POINTER:
        return IndexParams(fp_block_bytes=boundary * entry_size)
    if kind is IndexKind.RMI:
        return IndexParams(rmi_leaf_target=boundary)
    return IndexParams(epsilon=max(boundary // 2, 1))


def engine_config_for_point(cfg: ExperimentConfig, kind: IndexKind, boundary: int,
                            sstable_mb: float, granularity: Granularity,
                            data_dir: str) -> EngineConfig:
    entry_size = 16 + cfg.value_size
    if cfg.epsilon_override is not None and kind in (
            IndexKind.PLR, IndexKind.FITING_TREE, IndexKind.PGM, IndexKind.RADIX_SPLINE):
        params = IndexParams(epsilon=cfg.epsilon_override)
    elif cfg.leaf_count_override is not None and kind is IndexKind.RMI:
        params = IndexParams(leaf_count=cfg.leaf_count_override)
    else:
        params = params_for_boundary(kind, boundary, entry_size)
    return EngineConfig(
        data_dir=data_dir,
        size_ratio=cfg.size_ratio,
        write_buffer_bytes=int(cfg.write_buffer_mb * 2**20),
        sstable_target_bytes=int(sstable_mb * 2**20),
        value_size=cfg.value_size,
        block_bytes=cfg.block_bytes,
        bloom_bits_per_key=cfg.bloom_bits_per_key,
        index_kind=kind,
        index_params=params,
        granularity=granularity,
        compaction=cfg.compaction,
        per_level_epsilon=cfg.per_level_epsilon,
    )


def bulk_load(engine: LsmEngine, keys: np.ndarray,
              values: np.ndarray | None = None) -> None:
    """Write the whole dataset through put(), then push to steady state.

    ``values`` is the optional precomputed (n, value_size) byte matrix from
    derive_values_array, identical to what put-by-put derivation would store.
    """
    value_size = engine.config.value_size
    if values is None:
        values = derive_values_array(value_hashes_for_load(keys), value_size)
    rows = values.tobytes()
    for i, key in enumerate(keys.tolist()):
        engine.put(key, rows[i * value_size:(i + 1) * value_size])
    if len(engine.memtable):
        engine.flush()
    engine.maybe_compact()


def replay(engine: LsmEngine, ops: list[tuple[str, int, int]]) -> None:
    value_size = engine.config.value_size
    for op, key, arg in ops:
        if op == "R":
            engine.get(key)
        elif op == "P":
            engine.put(key, derive_value(arg, value_size))
        elif op == "D":
            engine.delete(key)
        elif op == "S":
            engine.scan(key, arg)
        else:
            raise InvalidConfigError(f"unknown op {op!r}")


def _build_report(engine: LsmEngine, meta: dict) -> MetricsReport:
    metrics = engine.metrics
    stats = engine.stats()
    n_ops = len(metrics.op_latencies_ns)
    totals = metrics.compaction_totals()
    max_level = max(stats.per_level_index_bytes, default=0)
    read_ns_total = sum(metrics.per_level_read_ns.values())
    shares = []
    level_bytes = []
    for level in range(1, max_level + 1):
        ns = metrics.per_level_read_ns.get(level, 0)
        shares.append(f"{ns / read_ns_total:.4f}" if read_ns_total else "0.0000")
        level_bytes.append(str(stats.per_level_index_bytes.get(level, 0)))
    lat = metrics.op_latencies_ns
    return MetricsReport(
        n_ops=n_ops,
        mean_us=(sum(lat) / n_ops / 1000.0) if n_ops else 0.0,
        p50_us=percentile_us(lat, 0.50),
        p99_us=percentile_us(lat, 0.99),
        t_table_lookup_ns=metrics.t_table_lookup_ns,
        t_predict_ns=metrics.t_predict_ns,
        t_io_ns=metrics.t_io_ns,
        t_bsearch_ns=metrics.t_bsearch_ns,
        blocks_per_op=(metrics.blocks_read / n_ops) if n_ops else 0.0,
        bytes_per_op=(metrics.bytes_read / n_ops) if n_ops else 0.0,
        index_bytes=stats.index_bytes,
        bloom_bytes=stats.bloom_bytes,
        compaction_total_ms=totals["total_ns"] / 1e6,
        compaction_train_ms=totals["train_ns"] / 1e6,
        compaction_index_write_ms=totals["index_write_ns"] / 1e6,
        per_level_read_share=";".join(shares),
        per_level_index_bytes=";".join(level_bytes),
        **meta,
    )


def run_experiment(cfg: ExperimentConfig) -> list[MetricsReport]:
    keys = gen_keys(cfg.dataset)
    ops = gen_ops(cfg.workload, keys)
    load_values = derive_values_array(value_hashes_for_load(keys), cfg.value_size)
    reports = []
    for i, (kind, boundary, sstable_mb, gran) in enumerate(cfg.sweep_points()):
        meta = {
            "index_kind": kind.value,
            "boundary": boundary,
            "epsilon": max(boundary // 2, 1) if kind in (
                IndexKind.PLR, IndexKind.FITING_TREE, IndexKind.PGM,
                IndexKind.RADIX_SPLINE) else 0,
            "sstable_mb": float(sstable_mb),
            "granularity": gran.value,
            "dataset": cfg.dataset.label(),
            "workload": cfg.workload.label(),
        }
        try:
            runs = [_run_point(cfg, kind, boundary, sstable_mb, gran, keys, ops,
                               load_values, i, rep)
                    for rep in range(max(cfg.repetitions, 1))]
            report = _merge_repetitions(runs)
            for name, value in meta.items():
                setattr(report, name, value)
        except LsmError as exc:
            report = MetricsReport(status=f"error: {exc}", **meta)
        reports.append(report)
    return reports


def _run_point(cfg: ExperimentConfig, kind: IndexKind, boundary: int, sstable_mb: float,
               gran: Granularity, keys: np.ndarray, ops, load_values, point: int,
               rep: int) -> MetricsReport:
    data_dir = os.path.join(cfg.data_dir, f"point_{point:03d}")
    shutil.rmtree(data_dir, ignore_errors=True)
    engine_cfg = engine_config_for_point(cfg, kind, boundary, sstable_mb, gran, data_dir)
    engine = LsmEngine(engine_cfg)
    try:
        bulk_load(engine, keys, load_values)
        engine.metrics.reset()
        replay(engine, ops)
        return _build_report(engine, {})
    finally:
        engine.close()
        if not cfg.keep_data:
            shutil.rmtree(data_dir, ignore_errors=True)


def _merge_repetitions(runs: list[MetricsReport]) -> MetricsReport:
    first = runs[0]
    if len(runs) == 1:
        return first
    for other in runs[1:]:
        for col in MetricsReport.LOGICAL_COLUMNS:
            if getattr(first, col) != getattr(other, col):
                first.status = f"nondeterministic: {col}"
                return first
    for col in ("mean_us", "p50_us", "p99_us", "compaction_total_ms",
                "compaction_train_ms", "compaction_index_write_ms"):
        setattr(first, col, statistics.median(getattr(r, col) for r in runs))
    for col in ("t_table_lookup_ns", "t_predict_ns", "t_io_ns", "t_bsearch_ns"):
        setattr(first, col, int(statistics.median(getattr(r, col) for r in runs)))
    return first


def emit_csv(reports: list[MetricsReport], path: str) -> None:
    if not reports:
        raise InvalidConfigError("no reports to emit")
    with open(path, "w") as fh:
        fh.write(",".join(MetricsReport.CSV_COLUMNS) + "\n")
        for report in reports:
            fh.write(",".join(report.csv_values()) + "\n")


# ---------------------------------------------------------------- verification

@dataclass
class VerifyCheck:
    name: str
    passed: bool
    checked: int
    detail: str = ""


VERIFY_EPSILONS = (4, 16, 64)
VERIFY_DATASETS = (DatasetKind.UNIFORM, DatasetKind.SEGMENTED,
                   DatasetKind.LOGNORMAL, DatasetKind.PARETO_GAPS)


def verify(n: int, seed: int, data_dir: str) -> list[VerifyCheck]:
    """Correctness gauntlet behind the `verify` CLI subcommand."""
    checks = [
        _verify_containment(n, seed),
        _verify_dominance(seed),
        _verify_roundtrip(n, seed),
        *_verify_engine_oracle(n, seed, data_dir),
    ]
    return checks


def _verify_containment(n: int, seed: int) -> VerifyCheck:
    entry_size = 116
    checked, failures = 0, 0
    for ds_kind in VERIFY_DATASETS:
        keys = gen_keys(DatasetSpec(kind=ds_kind, n=n, seed=seed))
        pos = np.arange(keys.size, dtype=np.int64)
        for kind in IndexKind:
            for eps in VERIFY_EPSILONS:
                params = params_for_boundary(kind, 2 * eps, entry_size)
                index = build_index(kind, params, keys, entry_size=entry_size)
                lo, hi = index.predict_many(keys)
                checked += keys.size
                failures += int(np.count_nonzero((pos < lo) | (pos > hi)))
                width = int((hi - lo + 1).max())
                if width > index.position_boundary():
                    failures += 1
    return VerifyCheck("containment+boundary", failures == 0, checked,
                       f"{failures} violations")


def _verify_dominance(seed: int) -> VerifyCheck:
    checked, failures = 0, 0
    rng = np.random.default_rng(seed)
    for trial in range(20):
        m = int(rng.integers(2, 5000))
        keys = np.unique(rng.integers(0, 2**63, size=m, dtype=np.uint64))
        eps = int(rng.integers(1, 65))
        n_opt = len(segment_optimal(keys, eps)[0])
        n_greedy = len(segment_greedy(keys, eps)[0])
        checked += 1
        failures += int(n_opt > n_greedy)
    return VerifyCheck("optimal<=greedy", failures == 0, checked, f"{failures} violations")


def _verify_roundtrip(n: int, seed: int) -> VerifyCheck:
    keys = gen_keys(DatasetSpec(kind=DatasetKind.UNIFORM, n=min(n, 20_000), seed=seed))
    probes = gen_keys(DatasetSpec(kind=DatasetKind.UNIFORM, n=10_000, seed=seed + 1))
    checked, failures = 0, 0
    for kind in IndexKind:
        params = params_for_boundary(kind, 32, 116)
        index = build_index(kind, params, keys, entry_size=116)
        blob = serialize_index(index)
        again = deserialize_index(blob)
        if serialize_index(again) != blob:
            failures += 1
        for arr in (keys, probes):
            lo1, hi1 = index.predict_many(arr)
            lo2, hi2 = again.predict_many(arr)
            checked += arr.size
            if not (np.array_equal(lo1, lo2) and np.array_equal(hi1, hi2)):
                failures += 1
    return VerifyCheck("serialize-roundtrip", failures == 0, checked, f"{failures} mismatches")


def _verify_engine_oracle(n: int, seed: int, data_dir: str) -> list[VerifyCheck]:
    n_ops = min(max(n // 5, 1000), 20_000)
    keys = gen_keys(DatasetSpec(kind=DatasetKind.UNIFORM, n=max(n // 10, 1000), seed=seed))
    rng_ops = gen_ops(WorkloadSpec(kind=WorkloadKind.YCSB_A, n_ops=n_ops, seed=seed), keys)

    work_dir = os.path.join(data_dir, "verify")
    shutil.rmtree(work_dir, ignore_errors=True)
    cfg = EngineConfig(data_dir=work_dir, write_buffer_bytes=256 * 1024,
                       sstable_target_bytes=512 * 1024, value_size=100,
                       index_kind=IndexKind.PGM, index_params=IndexParams(epsilon=16))
    engine = LsmEngine(cfg)
    oracle: dict[int, bytes] = {}
    mism, io_viol, probes = 0, 0, 0
    try:
        for key in keys.tolist():
            value = derive_value(value_hash_for_load(key), cfg.value_size)
            engine.put(key, value)
            oracle[key] = value
        for op, key, arg in rng_ops:
            if op == "P":
                value = derive_value(arg, cfg.value_size)
                engine.put(key, value)
                oracle[key] = value
            elif op == "R":
                engine.get(key)
        if len(engine.memtable):
            engine.flush()
        bb = boundary_blocks(2 * cfg.index_params.epsilon, cfg.entry_size, cfg.block_bytes)
        probe_keys = list(oracle)[:: max(len(oracle) // 5000, 1)]
        for key in probe_keys:
            before_blocks = engine.metrics.blocks_read
            before_touch = sum(engine.metrics.per_level_reads.values())
            got = engine.get(key)
            touched = sum(engine.metrics.per_level_reads.values()) - before_touch
            delta = engine.metrics.blocks_read - before_blocks
            probes += 1
            if got != oracle.get(key):
                mism += 1
            if delta > touched * bb:
                io_viol += 1
        sorted_keys = sorted(oracle)
        for i in range(0, len(sorted_keys), max(len(sorted_keys) // 50, 1)):
            want = [(k, oracle[k]) for k in sorted_keys[i:i + 25]]
            got = engine.scan(sorted_keys[i], len(want))
            if [(k, bytes(v)) for k, v in got] != want:
                mism += 1
    finally:
        engine.close()
        shutil.rmtree(work_dir, ignore_errors=True)
    return [
        VerifyCheck("oracle-equivalence", mism == 0, probes, f"{mism} mismatches"),
        VerifyCheck("io-bound", io_viol == 0, probes, f"{io_viol} violations"),
    ]
