import csv
import os

import pytest

from learnedlsm.bench import (
    ExperimentConfig,
    emit_csv,
    params_for_boundary,
    run_experiment,
    verify,
)
from learnedlsm.core import CompactionMode, Granularity, IndexKind, IndexParams
from learnedlsm.errors import InvalidConfigError
from learnedlsm.indexes import build_index
from learnedlsm.metrics import MetricsReport
from learnedlsm.workload import DatasetKind, DatasetSpec, WorkloadKind, WorkloadSpec


def small_cfg(tmp_path, **kwargs) -> ExperimentConfig:
    defaults = dict(
        dataset=DatasetSpec(kind=DatasetKind.UNIFORM, n=20_000, seed=5),
        workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY, n_ops=1500, seed=5),
        data_dir=str(tmp_path),
        index_kinds=(IndexKind.PGM,),
        boundaries=(64,),
        sstable_mbs=(0.5,),
        write_buffer_mb=0.25,
        value_size=100,
    )
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class TestBoundaryMapping:
    def test_epsilon_is_half_boundary(self):
        for kind in (IndexKind.PLR, IndexKind.FITING_TREE, IndexKind.PGM,
                     IndexKind.RADIX_SPLINE):
            assert params_for_boundary(kind, 64, 116).epsilon == 32

    def test_fence_blocks_hold_exactly_boundary_entries(self):
        params = params_for_boundary(IndexKind.FENCE_POINTER, 32, 116)
        assert params.fp_block_bytes == 32 * 116

    def test_rmi_doubling_reaches_target(self, uniform_20k):
        for target in (8, 32, 128):
            params = params_for_boundary(IndexKind.RMI, target, 116)
            assert params.rmi_leaf_target == target
            index = build_index(IndexKind.RMI, params, uniform_20k)
            assert index.position_boundary() <= target
            leaf_count = index.leaf_slopes.size
            if leaf_count > 1:  # one fewer doubling must miss the target
                smaller = build_index(IndexKind.RMI,
                                      IndexParams(leaf_count=leaf_count // 2), uniform_20k)
                assert smaller.position_boundary() > target

    def test_boundary_must_be_at_least_two(self):
        with pytest.raises(InvalidConfigError):
            params_for_boundary(IndexKind.PGM, 1, 116)


class TestRunExperiment:
    def test_zero_ops_still_reports_memory(self, tmp_path):
        cfg = small_cfg(tmp_path, workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY,
                                                        n_ops=0, seed=1))
        rows = run_experiment(cfg)
        assert len(rows) == 1
        row = rows[0]
        assert row.status == "ok"
        assert row.n_ops == 0
        assert row.index_bytes > 0 and row.bloom_bytes > 0

    def test_logical_columns_reproducible(self, tmp_path):
        cfg = small_cfg(tmp_path)
        first = run_experiment(cfg)[0]
        second = run_experiment(cfg)[0]
        for col in MetricsReport.LOGICAL_COLUMNS:
            assert getattr(first, col) == getattr(second, col), col

    def test_sweep_produces_cartesian_rows(self, tmp_path):
        cfg = small_cfg(tmp_path, index_kinds=(IndexKind.PLR, IndexKind.FENCE_POINTER),
                        boundaries=(16, 64),
                        workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY, n_ops=200,
                                              seed=5))
        rows = run_experiment(cfg)
        assert len(rows) == 4
        seen = {(r.index_kind, r.boundary) for r in rows}
        assert seen == {("plr", 16), ("plr", 64), ("fence", 16), ("fence", 64)}

    def test_sweep_cap_enforced(self, tmp_path):
        cfg = small_cfg(tmp_path, boundaries=tuple(range(2, 600)), sweep_cap=100)
        with pytest.raises(InvalidConfigError):
            run_experiment(cfg)

    def test_per_level_requires_full_compaction(self, tmp_path):
        cfg = small_cfg(tmp_path, granularities=(Granularity.PER_LEVEL,))
        with pytest.raises(InvalidConfigError):
            run_experiment(cfg)
        ok = small_cfg(tmp_path, granularities=(Granularity.PER_LEVEL,),
                       compaction=CompactionMode.FULL,
                       workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY, n_ops=200,
                                             seed=5))
        assert run_experiment(ok)[0].status == "ok"

    def test_repetitions_report_median_and_stable_logicals(self, tmp_path):
        cfg = small_cfg(tmp_path, repetitions=3,
                        workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY, n_ops=300,
                                              seed=5))
        row = run_experiment(cfg)[0]
        assert row.status == "ok"

    def test_write_only_records_compactions(self, tmp_path):
        cfg = small_cfg(
            tmp_path,
            dataset=DatasetSpec(kind=DatasetKind.UNIFORM, n=5_000, seed=5),
            workload=WorkloadSpec(kind=WorkloadKind.WRITE_ONLY, n_ops=20_000, seed=5),
        )
        row = run_experiment(cfg)[0]
        assert row.status == "ok"
        assert row.compaction_total_ms > 0
        assert row.compaction_train_ms >= 0

    def test_per_level_epsilon_override_accepted(self, tmp_path):
        cfg = small_cfg(tmp_path, per_level_epsilon=(4, 32),
                        workload=WorkloadSpec(kind=WorkloadKind.POINT_ONLY, n_ops=200,
                                              seed=5))
        assert run_experiment(cfg)[0].status == "ok"


class TestEmitCsv:
    def test_one_report_two_lines(self, tmp_path):
        path = str(tmp_path / "out.csv")
        emit_csv([MetricsReport(index_kind="pgm", boundary=64)], path)
        lines = open(path).read().strip().split("\n")
        assert len(lines) == 2
        assert lines[0].split(",") == list(MetricsReport.CSV_COLUMNS)

    def test_round_trip_recovers_numeric_fields(self, tmp_path):
        report = MetricsReport(index_kind="plr", boundary=32, epsilon=16,
                               sstable_mb=4.0, granularity="file", dataset="uniform",
                               workload="point", n_ops=100, mean_us=12.5, p50_us=11.0,
                               p99_us=30.25, t_table_lookup_ns=111, t_predict_ns=222,
                               t_io_ns=333, t_bsearch_ns=444, blocks_per_op=3.0,
                               bytes_per_op=12288.0, index_bytes=1000, bloom_bytes=2000,
                               compaction_total_ms=1.5, compaction_train_ms=0.25,
                               compaction_index_write_ms=0.125,
                               per_level_read_share="0.8;0.2",
                               per_level_index_bytes="600;400")
        path = str(tmp_path / "row.csv")
        emit_csv([report], path)
        with open(path) as fh:
            row = next(csv.DictReader(fh))
        for col in MetricsReport.CSV_COLUMNS:
            want = getattr(report, col)
            got = type(want)(row[col]) if not isinstance(want, str) else row[col]
            assert got == want, col

    def test_empty_reports_rejected(self, tmp_path):
        with pytest.raises(InvalidConfigError):
            emit_csv([], str(tmp_path / "x.csv"))


class TestVerifySuite:
    def test_small_verify_passes(self, tmp_path):
        checks = verify(2000, 7, str(tmp_path))
        assert checks and all(c.passed for c in checks)
        names = {c.name for c in checks}
        assert {"containment+boundary", "optimal<=greedy", "serialize-roundtrip",
                "oracle-equivalence", "io-bound"} <= names
