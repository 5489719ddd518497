import os

import pytest
from fastapi.testclient import TestClient

from learnedlsm.service.app import create_app
from learnedlsm.workload import derive_value, load_sosd


@pytest.fixture()
def client(tmp_path, monkeypatch):
    monkeypatch.setenv("LSM_BENCH_DATA_DIR", str(tmp_path))
    app = create_app()
    with TestClient(app) as tc:
        yield tc


class TestHealth:
    def test_healthz(self, client):
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json()["ok"] is True


class TestBenchEndpoint:
    def test_run_small_sweep(self, client):
        resp = client.post("/v1/bench/run", json={
            "dataset": {"kind": "uniform", "n": 8000, "seed": 2},
            "workload": {"kind": "point", "n_ops": 500, "seed": 2},
            "index_kinds": ["plr", "fence"],
            "boundaries": [32],
            "sstable_mbs": [0.5],
            "write_buffer_mb": 0.25,
        })
        assert resp.status_code == 200
        rows = resp.json()["rows"]
        assert len(rows) == 2
        assert {r["index_kind"] for r in rows} == {"plr", "fence"}
        assert all(r["status"] == "ok" for r in rows)
        assert all(r["blocks_per_op"] > 0 for r in rows)

    def test_config_error_maps_to_400(self, client):
        resp = client.post("/v1/bench/run", json={
            "dataset": {"kind": "uniform", "n": 1000, "seed": 2},
            "workload": {"kind": "point", "n_ops": 10, "seed": 2},
            "granularities": ["level"],
        })
        assert resp.status_code == 400
        assert "full-level compaction" in resp.json()["detail"]

    def test_unknown_kind_maps_to_400(self, client):
        resp = client.post("/v1/bench/run", json={"index_kinds": ["btree"]})
        assert resp.status_code == 400


class TestGenEndpoints:
    def test_dataset_file_and_inline(self, client, tmp_path):
        out = str(tmp_path / "u.sosd")
        resp = client.post("/v1/gen/dataset", json={
            "dataset": {"kind": "uniform", "n": 500, "seed": 3}, "out": out})
        assert resp.status_code == 200
        body = resp.json()
        assert body["n"] == 500
        assert body["keys"] is not None and len(body["keys"]) == 500
        assert load_sosd(out).size == 500

    def test_ops_file(self, client, tmp_path):
        out = str(tmp_path / "ops.txt")
        resp = client.post("/v1/gen/ops", json={
            "dataset": {"kind": "uniform", "n": 200, "seed": 3},
            "workload": {"kind": "ycsb-e", "n_ops": 50, "seed": 3},
            "out": out})
        assert resp.status_code == 200
        assert resp.json()["n_ops"] == 50
        lines = open(out).read().strip().split("\n")
        assert len(lines) == 50
        assert all(ln[0] in "PRDS" for ln in lines)


class TestVerifyEndpoint:
    def test_verify_passes(self, client):
        resp = client.post("/v1/verify/run", json={"n": 1000, "seed": 7})
        assert resp.status_code == 200
        body = resp.json()
        assert body["passed"] is True
        assert len(body["checks"]) >= 5


class TestDbLifecycle:
    def test_full_lifecycle(self, client):
        resp = client.post("/v1/db/open", json={"name": "kv", "value_size": 32,
                                                "write_buffer_mb": 0.125,
                                                "sstable_mb": 0.25})
        assert resp.status_code == 200

        value = derive_value(99, 32).hex()
        assert client.post("/v1/db/kv/put",
                           json={"key": 10, "value_hex": value}).status_code == 200
        assert client.post("/v1/db/kv/put",
                           json={"key": 11, "value_hash": 1234}).status_code == 200

        got = client.get("/v1/db/kv/get/10").json()
        assert got["found"] and got["value_hex"] == value
        got11 = client.get("/v1/db/kv/get/11").json()
        assert got11["value_hex"] == derive_value(1234, 32).hex()
        assert client.get("/v1/db/kv/get/999").json()["found"] is False

        scan = client.post("/v1/db/kv/scan", json={"from_key": 0, "count": 10}).json()
        assert [item["key"] for item in scan["items"]] == [10, 11]

        assert client.post("/v1/db/kv/delete", json={"key": 10}).status_code == 200
        assert client.get("/v1/db/kv/get/10").json()["found"] is False

        assert client.post("/v1/db/kv/flush").status_code == 200
        assert client.post("/v1/db/kv/compact").status_code == 200

        stats = client.get("/v1/db/kv/stats").json()
        assert stats["index_bytes"] > 0
        assert stats["tables_per_level"]

        assert client.post("/v1/db/kv/close").status_code == 200
        assert client.get("/v1/db/kv/get/11").status_code == 422

    def test_double_open_rejected(self, client):
        assert client.post("/v1/db/open", json={"name": "dup"}).status_code == 200
        assert client.post("/v1/db/open", json={"name": "dup"}).status_code == 400
        client.post("/v1/db/dup/close")

    def test_reopen_with_recover_serves_old_data(self, client, tmp_path):
        data_dir = str(tmp_path / "persist")
        open_body = {"name": "p1", "data_dir": data_dir, "value_size": 32}
        assert client.post("/v1/db/open", json=open_body).status_code == 200
        client.post("/v1/db/p1/put", json={"key": 5, "value_hash": 55})
        client.post("/v1/db/p1/flush")
        client.post("/v1/db/p1/close")
        reopen = dict(open_body, name="p2", recover=True)
        assert client.post("/v1/db/open", json=reopen).status_code == 200
        got = client.get("/v1/db/p2/get/5").json()
        assert got["found"] and got["value_hex"] == derive_value(55, 32).hex()
        client.post("/v1/db/p2/close")

    def test_wrong_value_size_maps_to_422(self, client):
        client.post("/v1/db/open", json={"name": "sz", "value_size": 32})
        resp = client.post("/v1/db/sz/put", json={"key": 1, "value_hex": "aa"})
        assert resp.status_code == 422
        client.post("/v1/db/sz/close")
