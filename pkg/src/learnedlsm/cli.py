"""Command-line front end: a thin client over the HTTP service.

Subcommands:

    bench   run an experiment sweep and write the CSV locally
    verify  run the correctness suites, exit 3 on any failure
    gen     dump datasets (SOSD binary) or op streams (replay text)
    serve   start the HTTP service with uvicorn

Without ``--server`` the client mounts the service in-process (same code
path, no socket); with ``--server http://host:port`` the same requests go
over the network.  Exit codes: 0 success, 1 configuration error, 2 runtime
error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .metrics import MetricsReport
from .service.app import DATA_DIR_ENV, create_app

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3


class ServiceClient:
    """HTTP client against a remote service or an in-process app instance."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient
            self._client = TestClient(create_app())

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 400:
            raise ClientError(resp.status_code, _error_detail(resp))
        return resp.json()

    def close(self) -> None:
        self._client.close()


class ClientError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail

    @property
    def exit_code(self) -> int:
        return EXIT_CONFIG if self.status in (400, 422) else EXIT_RUNTIME


def _error_detail(resp) -> str:
    try:
        body = resp.json()
    except ValueError:
        return resp.text
    if isinstance(body, dict):
        return str(body.get("detail", body))
    return str(body)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; config errors are 1
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser() -> _Parser:
    parser = _Parser(prog="learnedlsm",
                     description="LSM-tree benchmark harness with learned indexes")
    parser.add_argument("--server", default=os.environ.get("LSM_BENCH_SERVER"),
                        help="service URL; defaults to an in-process service")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run an experiment sweep, emit CSV")
    b.add_argument("--index", default="pgm",
                   help="comma list of fence,plr,fiting,pgm,radixspline,rmi or 'all'")
    b.add_argument("--boundary", default="64", help="comma list of position boundaries")
    b.add_argument("--epsilon", type=int, default=None,
                   help="fix epsilon directly for error-bounded kinds")
    b.add_argument("--leaf-count", type=int, default=None,
                   help="fix the RMI leaf count instead of fitting it")
    b.add_argument("--sstable-mb", default="4", help="comma list of SSTable sizes in MiB")
    b.add_argument("--granularity", default="file", help="comma list of file,level")
    b.add_argument("--compaction", default="partial", choices=["partial", "full"])
    b.add_argument("--dataset", default="uniform",
                   choices=["uniform", "segmented", "lognormal", "pareto", "file"])
    b.add_argument("--dataset-file", default=None, help="SOSD binary for --dataset file")
    b.add_argument("--n", type=int, default=100_000, help="dataset size")
    b.add_argument("--value-size", type=int, default=100)
    b.add_argument("--workload", default="point",
                   help="point|write|range[:LEN]|ycsb-a..ycsb-f")
    b.add_argument("--ops", type=int, default=10_000)
    b.add_argument("--seed", type=int, default=1)
    b.add_argument("--key-distribution", default="uniform",
                   choices=["uniform", "zipf", "latest"])
    b.add_argument("--size-ratio", type=int, default=10)
    b.add_argument("--buffer-mb", type=float, default=1.0)
    b.add_argument("--bloom-bpk", type=int, default=10)
    b.add_argument("--block-bytes", type=int, default=4096)
    b.add_argument("--per-level-epsilon", default=None,
                   help="comma list overriding epsilon per level")
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--out", default="bench.csv", help="CSV output path (written locally)")
    b.add_argument("--data-dir", default=None,
                   help=f"working directory (default ${DATA_DIR_ENV} or server-side)")
    b.add_argument("--keep-data", action="store_true")

    v = sub.add_parser("verify", help="run correctness suites")
    v.add_argument("--n", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=7)

    g = sub.add_parser("gen", help="dump datasets or op streams")
    g.add_argument("what", choices=["dataset", "ops"])
    g.add_argument("--dataset", default="uniform",
                   choices=["uniform", "segmented", "lognormal", "pareto", "file"])
    g.add_argument("--dataset-file", default=None)
    g.add_argument("--n", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--workload", default="point")
    g.add_argument("--ops", type=int, default=10_000)
    g.add_argument("--key-distribution", default="uniform",
                   choices=["uniform", "zipf", "latest"])
    g.add_argument("--out", required=True)

    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8640)
    return parser


def _parse_workload(text: str) -> tuple[str, int]:
    name, _, arg = text.partition(":")
    if name == "range":
        return "range", int(arg) if arg else 100
    return name, 100


def _dataset_payload(args) -> dict:
    payload = {"kind": args.dataset, "n": args.n, "seed": args.seed}
    if args.dataset == "file":
        if not args.dataset_file:
            print("--dataset file requires --dataset-file", file=sys.stderr)
            raise SystemExit(EXIT_CONFIG)
        payload["path"] = args.dataset_file
    return payload


def _cmd_bench(client: ServiceClient, args) -> int:
    kinds = ["fence", "plr", "fiting", "pgm", "radixspline", "rmi"] \
        if args.index.strip().lower() == "all" else args.index.split(",")
    workload_kind, range_len = _parse_workload(args.workload)
    payload = {
        "dataset": _dataset_payload(args),
        "workload": {"kind": workload_kind, "n_ops": args.ops, "seed": args.seed,
                     "key_distribution": args.key_distribution, "range_len": range_len},
        "index_kinds": [k.strip() for k in kinds],
        "boundaries": [int(x) for x in args.boundary.split(",")],
        "sstable_mbs": [float(x) for x in args.sstable_mb.split(",")],
        "granularities": [gr.strip() for gr in args.granularity.split(",")],
        "compaction": args.compaction,
        "value_size": args.value_size,
        "block_bytes": args.block_bytes,
        "size_ratio": args.size_ratio,
        "write_buffer_mb": args.buffer_mb,
        "bloom_bits_per_key": args.bloom_bpk,
        "epsilon": args.epsilon,
        "leaf_count": args.leaf_count,
        "repetitions": args.reps,
        "keep_data": args.keep_data,
        "data_dir": args.data_dir or os.environ.get(DATA_DIR_ENV),
    }
    if args.per_level_epsilon:
        payload["per_level_epsilon"] = [int(x) for x in args.per_level_epsilon.split(",")]
    body = client.post("/v1/bench/run", payload)
    rows = [MetricsReport(**row) for row in body["rows"]]
    from .bench import emit_csv

    emit_csv(rows, args.out)
    failed = [r for r in rows if r.status != "ok"]
    for row in rows:
        print(f"{row.index_kind:12s} boundary={row.boundary:4d} sstable={row.sstable_mb}MiB "
              f"{row.granularity:5s} blocks/op={row.blocks_per_op:.3f} "
              f"index={row.index_bytes}B status={row.status}")
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_verify(client: ServiceClient, args) -> int:
    body = client.post("/v1/verify/run", {"n": args.n, "seed": args.seed})
    for check in body["checks"]:
        state = "PASS" if check["passed"] else "FAIL"
        print(f"[{state}] {check['name']}: {check['checked']} checked, {check['detail']}")
    return EXIT_OK if body["passed"] else EXIT_VERIFY


def _cmd_gen(client: ServiceClient, args) -> int:
    if args.what == "dataset":
        body = client.post("/v1/gen/dataset",
                           {"dataset": _dataset_payload(args), "out": os.path.abspath(args.out)})
        print(f"dataset: n={body['n']} keys in [{body['min_key']}, {body['max_key']}] "
              f"crc32={body['checksum']:#010x} -> {body['path']}")
    else:
        workload_kind, range_len = _parse_workload(args.workload)
        body = client.post("/v1/gen/ops", {
            "dataset": _dataset_payload(args),
            "workload": {"kind": workload_kind, "n_ops": args.ops, "seed": args.seed,
                         "key_distribution": args.key_distribution, "range_len": range_len},
            "out": os.path.abspath(args.out),
        })
        print(f"ops: n={body['n_ops']} -> {body['path']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        return _dispatch(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG


def _dispatch(argv: list[str] | None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return EXIT_OK
    client = ServiceClient(args.server)
    try:
        if args.command == "bench":
            return _cmd_bench(client, args)
        if args.command == "verify":
            return _cmd_verify(client, args)
        if args.command == "gen":
            return _cmd_gen(client, args)
        return EXIT_CONFIG
    except ClientError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        client.close()


if __name__ == "__main__":
    sys.exit(main())
