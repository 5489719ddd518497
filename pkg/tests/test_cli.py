import csv
import os

import pytest

from learnedlsm.cli import main
from learnedlsm.metrics import MetricsReport
from learnedlsm.workload import load_ops, load_sosd


@pytest.fixture(autouse=True)
def _data_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("LSM_BENCH_DATA_DIR", str(tmp_path / "root"))
    monkeypatch.chdir(tmp_path)


def test_bench_writes_csv_and_exits_zero(tmp_path):
    out = str(tmp_path / "r.csv")
    code = main(["bench", "--index", "pgm", "--boundary", "64", "--dataset", "uniform",
                 "--n", "10000", "--workload", "point", "--ops", "1000",
                 "--buffer-mb", "0.25", "--sstable-mb", "0.5", "--out", out])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["index_kind"] == "pgm"
    assert rows[0]["status"] == "ok"
    assert list(rows[0].keys()) == list(MetricsReport.CSV_COLUMNS)


def test_bench_all_kinds_sweep_row_count(tmp_path):
    out = str(tmp_path / "all.csv")
    code = main(["bench", "--index", "all", "--boundary", "32,64", "--dataset", "uniform",
                 "--n", "5000", "--workload", "point", "--ops", "200",
                 "--buffer-mb", "0.25", "--sstable-mb", "0.5", "--out", out])
    assert code == 0
    with open(out) as fh:
        assert len(list(csv.DictReader(fh))) == 12


def test_level_granularity_without_full_compaction_is_config_error(tmp_path):
    code = main(["bench", "--index", "plr", "--granularity", "level",
                 "--dataset", "uniform", "--n", "2000", "--workload", "point",
                 "--ops", "10", "--out", str(tmp_path / "x.csv")])
    assert code == 1
    assert not os.path.exists(tmp_path / "x.csv")


def test_bad_flag_is_config_error():
    assert main(["bench", "--no-such-flag"]) == 1


def test_verify_exit_zero(capsys):
    assert main(["verify", "--n", "1500", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") >= 5
    assert "[FAIL]" not in out


def test_gen_dataset_and_ops(tmp_path):
    keys_path = str(tmp_path / "k.sosd")
    assert main(["gen", "dataset", "--dataset", "pareto", "--n", "300", "--seed", "4",
                 "--out", keys_path]) == 0
    assert load_sosd(keys_path).size == 300

    ops_path = str(tmp_path / "o.txt")
    assert main(["gen", "ops", "--dataset", "uniform", "--n", "200", "--seed", "4",
                 "--workload", "range:25", "--ops", "40", "--out", ops_path]) == 0
    ops = load_ops(ops_path)
    assert len(ops) == 40
    assert all(op == "S" and arg == 25 for op, _, arg in ops)


def test_dataset_file_flag_required_for_file_kind(tmp_path):
    assert main(["gen", "dataset", "--dataset", "file", "--n", "10",
                 "--out", str(tmp_path / "z.sosd")]) == 1
