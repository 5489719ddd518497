"""FastAPI service wrapping the engine and benchmark driver.

Two endpoint families: ``/v1/db/*`` exposes open engines as a key-value
service (one writer per database, concurrent readers), and ``/v1/bench``,
``/v1/verify``, ``/v1/gen`` run harness jobs server-side.  The CLI is a thin
client over exactly these routes.
"""

from __future__ import annotations

import os
import threading
import zlib

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import bench as bench_mod
from ..engine import LsmEngine
from ..errors import (
    CorruptIndexError,
    CorruptTableError,
    EmptyIndexError,
    IngestError,
    InvalidConfigError,
    InvalidInputError,
    LsmError,
    StorageError,
)
from ..workload import derive_value, dump_ops, format_op, gen_keys, gen_ops, write_sosd
from .schemas import (
    BenchRequest,
    BenchResponse,
    DbOpenRequest,
    DbStatsResponse,
    DeleteRequest,
    GenDatasetRequest,
    GenDatasetResponse,
    GenOpsRequest,
    GenOpsResponse,
    GetResponse,
    PutRequest,
    ReportRow,
    ScanItem,
    ScanRequest,
    ScanResponse,
    StatusResponse,
    VerifyCheckModel,
    VerifyRequest,
    VerifyResponse,
)

DATA_DIR_ENV = "LSM_BENCH_DATA_DIR"

_STATUS_BY_ERROR = (
    (InvalidConfigError, 400),
    (IngestError, 400),
    (EmptyIndexError, 422),
    (InvalidInputError, 422),
    (CorruptIndexError, 500),
    (CorruptTableError, 500),
    (StorageError, 500),
)


def default_data_root() -> str:
    return os.environ.get(DATA_DIR_ENV, os.path.join(os.getcwd(), "lsm-data"))


def create_app() -> FastAPI:
    app = FastAPI(title="learnedlsm", version="0.1.0",
                  description="LSM-tree key-value engine with pluggable learned indexes")
    app.state.dbs = {}
    app.state.lock = threading.Lock()

    @app.exception_handler(LsmError)
    async def _lsm_error(_request: Request, exc: LsmError):
        status = 500
        for err_type, code in _STATUS_BY_ERROR:
            if isinstance(exc, err_type):
                status = code
                break
        return JSONResponse(status_code=status,
                            content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/healthz", response_model=StatusResponse)
    def healthz():
        return StatusResponse(ok=True, detail="alive")

    # ------------------------------------------------------------- harness jobs

    @app.post("/v1/bench/run", response_model=BenchResponse)
    def bench_run(req: BenchRequest):
        cfg = req.to_config(os.path.join(default_data_root(), "bench"))
        reports = bench_mod.run_experiment(cfg)
        return BenchResponse(rows=[ReportRow.from_report(r) for r in reports])

    @app.post("/v1/verify/run", response_model=VerifyResponse)
    def verify_run(req: VerifyRequest):
        checks = bench_mod.verify(req.n, req.seed, os.path.join(default_data_root(), "verify"))
        return VerifyResponse(
            passed=all(c.passed for c in checks),
            checks=[VerifyCheckModel(name=c.name, passed=c.passed, checked=c.checked,
                                     detail=c.detail) for c in checks],
        )

    @app.post("/v1/gen/dataset", response_model=GenDatasetResponse)
    def gen_dataset(req: GenDatasetRequest):
        keys = gen_keys(req.dataset.to_spec())
        checksum = zlib.crc32(keys.tobytes())
        path = None
        if req.out:
            os.makedirs(os.path.dirname(os.path.abspath(req.out)), exist_ok=True)
            write_sosd(req.out, keys)
            path = os.path.abspath(req.out)
        inline = keys.tolist() if keys.size <= req.inline_limit else None
        return GenDatasetResponse(n=int(keys.size), min_key=int(keys[0]),
                                  max_key=int(keys[-1]), checksum=checksum,
                                  path=path, keys=inline)

    @app.post("/v1/gen/ops", response_model=GenOpsResponse)
    def gen_ops_endpoint(req: GenOpsRequest):
        keys = gen_keys(req.dataset.to_spec())
        ops = gen_ops(req.workload.to_spec(), keys)
        path = None
        if req.out:
            os.makedirs(os.path.dirname(os.path.abspath(req.out)), exist_ok=True)
            dump_ops(ops, req.out)
            path = os.path.abspath(req.out)
        inline = None
        if len(ops) <= req.inline_limit:
            inline = [format_op(op, key, arg) for op, key, arg in ops]
        return GenOpsResponse(n_ops=len(ops), path=path, ops=inline)

    # -------------------------------------------------------------- kv database

    def _db(name: str) -> LsmEngine:
        engine = app.state.dbs.get(name)
        if engine is None:
            raise InvalidInputError(f"no open database named {name!r}")
        return engine

    @app.post("/v1/db/open", response_model=StatusResponse)
    def db_open(req: DbOpenRequest):
        with app.state.lock:
            if req.name in app.state.dbs:
                raise InvalidConfigError(f"database {req.name!r} is already open")
            cfg = req.to_engine_config(default_data_root())
            app.state.dbs[req.name] = LsmEngine(cfg, recover=req.recover)
        return StatusResponse(ok=True, detail=f"opened {req.name} at {cfg.data_dir}")

    @app.post("/v1/db/{name}/put", response_model=StatusResponse)
    def db_put(name: str, req: PutRequest):
        engine = _db(name)
        if req.value_hex is not None:
            value = bytes.fromhex(req.value_hex)
        elif req.value_hash is not None:
            value = derive_value(req.value_hash, engine.config.value_size)
        else:
            raise InvalidInputError("put needs value_hex or value_hash")
        engine.put(req.key, value)
        return StatusResponse(ok=True)

    @app.post("/v1/db/{name}/delete", response_model=StatusResponse)
    def db_delete(name: str, req: DeleteRequest):
        _db(name).delete(req.key)
        return StatusResponse(ok=True)

    @app.get("/v1/db/{name}/get/{key}", response_model=GetResponse)
    def db_get(name: str, key: int):
        value = _db(name).get(key)
        if value is None:
            return GetResponse(found=False)
        return GetResponse(found=True, value_hex=bytes(value).hex())

    @app.post("/v1/db/{name}/scan", response_model=ScanResponse)
    def db_scan(name: str, req: ScanRequest):
        items = _db(name).scan(req.from_key, req.count)
        return ScanResponse(items=[ScanItem(key=k, value_hex=bytes(v).hex())
                                   for k, v in items])

    @app.post("/v1/db/{name}/flush", response_model=StatusResponse)
    def db_flush(name: str):
        engine = _db(name)
        if len(engine.memtable):
            engine.flush()
        return StatusResponse(ok=True)

    @app.post("/v1/db/{name}/compact", response_model=StatusResponse)
    def db_compact(name: str):
        records = _db(name).maybe_compact()
        return StatusResponse(ok=True, detail=f"{len(records)} compactions")

    @app.get("/v1/db/{name}/stats", response_model=DbStatsResponse)
    def db_stats(name: str):
        engine = _db(name)
        acc = engine.stats()
        counts = {s.level: sum(t.entry_count for t in s.tables) for s in engine.levels}
        return DbStatsResponse(
            name=name,
            entry_counts_per_level=counts,
            tables_per_level=engine.level_table_counts(),
            index_bytes=acc.index_bytes,
            bloom_bytes=acc.bloom_bytes,
            memtable_bytes=acc.memtable_bytes,
            per_level_index_bytes=acc.per_level_index_bytes,
        )

    @app.post("/v1/db/{name}/close", response_model=StatusResponse)
    def db_close(name: str):
        with app.state.lock:
            engine = app.state.dbs.pop(name, None)
        if engine is None:
            raise InvalidInputError(f"no open database named {name!r}")
        engine.close()
        return StatusResponse(ok=True)

    return app


app = create_app()
