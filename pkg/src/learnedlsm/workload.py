"""Deterministic datasets and operation streams.

All randomness flows from one fixed generator: xoshiro256** seeded through
splitmix64.  Integer-only generators (uniform, segmented, pareto-gap) are
bit-reproducible everywhere; the lognormal shape goes through libm
transcendentals, so it is bit-reproducible per platform.

Operation streams serialize to a line format for cross-implementation
replay: ``P <key> <value_hash>``, ``D <key>``, ``R <key>``, ``S <key> <len>``.
Values are never shipped; a value is the splitmix64 expansion of its 64-bit
value_hash to the configured value size.
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IngestError, InvalidConfigError, InvalidInputError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer; the package's one-shot hash."""
    x = (x + _GOLDEN) & _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        x = self.state
        x ^= x >> 30
        x = (x * 0xBF58476D1CE4E5B9) & _MASK
        x ^= x >> 27
        x = (x * 0x94D049BB133111EB) & _MASK
        x ^= x >> 31
        return x


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** with splitmix64 state expansion."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        self.s = [sm.next(), sm.next(), sm.next(), sm.next()]
        if not any(self.s):
            self.s[0] = 1

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def next_below(self, n: int) -> int:
        return self.next_u64() % n


class DatasetKind(enum.Enum):
    UNIFORM = "uniform"
    SEGMENTED = "segmented"
    LOGNORMAL = "lognormal"
    PARETO_GAPS = "pareto"
    FROM_FILE = "file"

    @classmethod
    def parse(cls, name: str) -> "DatasetKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown dataset kind {name!r}") from None


@dataclass(frozen=True)
class DatasetSpec:
    kind: DatasetKind = DatasetKind.UNIFORM
    n: int = 100_000
    seed: int = 1
    pieces: int = 10          # segmented only
    path: str | None = None   # from-file only

    def label(self) -> str:
        return self.kind.value if self.kind is not DatasetKind.FROM_FILE else \
            f"file:{os.path.basename(self.path or '')}"


class WorkloadKind(enum.Enum):
    POINT_ONLY = "point"
    WRITE_ONLY = "write"
    RANGE_ONLY = "range"
    YCSB_A = "ycsb-a"
    YCSB_B = "ycsb-b"
    YCSB_C = "ycsb-c"
    YCSB_D = "ycsb-d"
    YCSB_E = "ycsb-e"
    YCSB_F = "ycsb-f"

    @classmethod
    def parse(cls, name: str) -> "WorkloadKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown workload kind {name!r}") from None


class KeyPick(enum.Enum):
    UNIFORM = "uniform"
    ZIPF = "zipf"
    LATEST = "latest"

    @classmethod
    def parse(cls, name: str) -> "KeyPick":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise InvalidConfigError(f"unknown key distribution {name!r}") from None


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.POINT_ONLY
    n_ops: int = 10_000
    seed: int = 1
    key_distribution: KeyPick = KeyPick.UNIFORM
    range_len: int = 100      # range-only

    def label(self) -> str:
        if self.kind is WorkloadKind.RANGE_ONLY:
            return f"range{self.range_len}"
        return self.kind.value


def derive_value(value_hash: int, value_size: int) -> bytes:
    """Expand a 64-bit tag to the instance's fixed value size."""
    sm = SplitMix64(value_hash)
    words = (value_size + 7) // 8
    raw = struct.pack(f"<{words}Q", *(sm.next() for _ in range(words)))
    return raw[:value_size]


def derive_values_array(value_hashes: np.ndarray, value_size: int) -> np.ndarray:
    """Vectorized derive_value: one (n, value_size) uint8 row per tag, byte
    for byte identical to the scalar expansion."""
    hashes = np.asarray(value_hashes, dtype=np.uint64)
    words = (value_size + 7) // 8
    out = np.empty((hashes.size, words), dtype="<u8")
    state = hashes.copy()
    for w in range(words):
        state += np.uint64(_GOLDEN)
        x = state.copy()
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
        out[:, w] = x
    return out.view(np.uint8).reshape(hashes.size, words * 8)[:, :value_size]


def mix64_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64) + np.uint64(_GOLDEN)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


def value_hash_for_load(key: int) -> int:
    """Tag used for bulk-loaded entries, so oracles can re-derive values."""
    return mix64(key ^ 0xC0FFEE)


def value_hashes_for_load(keys: np.ndarray) -> np.ndarray:
    return mix64_array(np.asarray(keys, dtype=np.uint64) ^ np.uint64(0xC0FFEE))


# --------------------------------------------------------------------- datasets

def gen_keys(spec: DatasetSpec) -> np.ndarray:
    if spec.kind is not DatasetKind.FROM_FILE and spec.n < 1:
        raise InvalidInputError("dataset size must be >= 1")
    if spec.kind is DatasetKind.UNIFORM:
        return _gen_uniform(spec.n, spec.seed)
    if spec.kind is DatasetKind.SEGMENTED:
        return _gen_segmented(spec.n, spec.seed, spec.pieces)
    if spec.kind is DatasetKind.LOGNORMAL:
        return _gen_lognormal(spec.n, spec.seed)
    if spec.kind is DatasetKind.PARETO_GAPS:
        return _gen_pareto(spec.n, spec.seed)
    if spec.kind is DatasetKind.FROM_FILE:
        return load_sosd(spec.path or "", spec.n)
    raise InvalidConfigError(f"unsupported dataset kind {spec.kind}")


def _gen_uniform(n: int, seed: int) -> np.ndarray:
    rng = Xoshiro256(seed)
    seen = set()
    while len(seen) < n:
        seen.add(rng.next_u64() >> 1)
    return np.fromiter(sorted(seen), dtype=np.uint64, count=n)


def _gen_segmented(n: int, seed: int, pieces: int) -> np.ndarray:
    if pieces < 1:
        raise InvalidConfigError("segmented dataset needs >= 1 piece")
    rng = Xoshiro256(seed)
    pieces = min(pieces, n)
    space = 1 << 63
    cuts = sorted(rng.next_u64() % space for _ in range(pieces - 1))
    bounds = [0] + cuts + [space]
    weights = [1 + rng.next_below(1000) for _ in range(pieces)]
    total_w = sum(weights)
    counts = [max(1, (n * w) // total_w) for w in weights]
    while sum(counts) > n:
        counts[counts.index(max(counts))] -= 1
    while sum(counts) < n:
        counts[counts.index(max(counts))] += 1
    out = np.empty(n, dtype=np.uint64)
    pos = 0
    for j in range(pieces):
        width = bounds[j + 1] - bounds[j]
        cnt = counts[j]
        stride = max(width // (cnt + 1), 1)
        base = bounds[j]
        for i in range(cnt):
            out[pos] = base + (i + 1) * stride
            pos += 1
    keys = np.unique(out)
    if keys.size < n:  # adjacent pieces of width < count can collide at edges
        rng2 = Xoshiro256(seed ^ 0xDEAD)
        extra = set(int(k) for k in keys)
        while len(extra) < n:
            extra.add(rng2.next_u64() % space)
        keys = np.fromiter(sorted(extra), dtype=np.uint64, count=n)
    return keys


def _gen_lognormal(n: int, seed: int, sigma: float = 2.0) -> np.ndarray:
    rng = Xoshiro256(seed)
    seen = set()
    top = float(1 << 62)
    while len(seen) < n:
        u1 = rng.next_float()
        u2 = rng.next_float()
        if u1 <= 0.0:
            continue
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        x = math.exp(sigma * z)
        key = int(x * 1e12)
        if 0 < key < top:
            seen.add(key)
    return np.fromiter(sorted(seen), dtype=np.uint64, count=n)


def _gen_pareto(n: int, seed: int, alpha: float = 1.5, scale: int = 256) -> np.ndarray:
    rng = Xoshiro256(seed)
    out = np.empty(n, dtype=np.uint64)
    acc = 0
    inv_alpha = -1.0 / alpha
    for i in range(n):
        u = rng.next_float()
        gap = int(scale * ((1.0 - u) ** inv_alpha - 1.0)) + 1
        acc += gap
        out[i] = acc
    if acc >= 1 << 63:
        raise InvalidInputError("pareto gap accumulation overflowed the key space")
    return out


SOSD_HEADER = struct.Struct("<Q")


def load_sosd(path: str, n: int = 0) -> np.ndarray:
    """SOSD binary: u64 little-endian count, then count u64 keys.  Returns the
    first ``n`` keys after sort+dedup (all of them when n == 0)."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(8)
            if len(head) != 8:
                raise IngestError(f"{path}: missing SOSD header")
            (count,) = SOSD_HEADER.unpack(head)
            raw = fh.read(count * 8)
    except OSError as exc:
        raise IngestError(f"cannot read dataset {path}: {exc}") from exc
    if len(raw) != count * 8:
        raise IngestError(f"{path}: truncated ({len(raw)} of {count * 8} data bytes)")
    keys = np.unique(np.frombuffer(raw, dtype="<u8"))
    if n:
        if keys.size < n:
            raise IngestError(f"{path}: {keys.size} distinct keys < requested {n}")
        keys = keys[:n]
    return keys.astype(np.uint64)


def write_sosd(path: str, keys: np.ndarray) -> None:
    arr = np.asarray(keys, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(SOSD_HEADER.pack(arr.size))
        fh.write(arr.tobytes())


# ------------------------------------------------------------------ op streams

class _ZipfPicker:
    """YCSB-style zipfian rank generator (theta = 0.99), ranks scrambled over
    the item space with a multiplicative hash."""

    def __init__(self, n_items: int, theta: float = 0.99):
        self.n = n_items
        self.theta = theta
        ranks = np.arange(1, n_items + 1, dtype=np.float64)
        self.zetan = float(np.sum(ranks ** -theta))
        self.zeta2 = 1.0 + 0.5 ** theta
        self.alpha = 1.0 / (1.0 - theta)
        self.eta = (1.0 - (2.0 / n_items) ** (1.0 - theta)) / (1.0 - self.zeta2 / self.zetan)

    def rank(self, rng: Xoshiro256) -> int:
        u = rng.next_float()
        uz = u * self.zetan
        if uz < 1.0:
            return 0
        if uz < self.zeta2:
            return 1
        return min(int(self.n * (self.eta * u - self.eta + 1.0) ** self.alpha), self.n - 1)

    def pick(self, rng: Xoshiro256) -> int:
        return mix64(self.rank(rng)) % self.n


def gen_ops(spec: WorkloadSpec, dataset: np.ndarray) -> list[tuple[str, int, int]]:
    """Deterministic op stream: tuples of (op, key, arg) where arg is the
    value_hash for P, the scan length for S, and 0 otherwise."""
    if dataset.size == 0:
        raise InvalidInputError("op generation needs a non-empty dataset")
    rng = Xoshiro256(spec.seed ^ 0x0B5)
    n = int(dataset.size)
    existing = set(int(k) for k in dataset)
    inserted: list[int] = []
    zipf = _ZipfPicker(n) if spec.key_distribution is KeyPick.ZIPF else None

    def pick_read_key() -> int:
        if spec.key_distribution is KeyPick.ZIPF:
            return int(dataset[zipf.pick(rng)])
        if spec.key_distribution is KeyPick.LATEST:
            total = n + len(inserted)
            back = rng.next_below(min(64, total))
            item = total - 1 - back
            return inserted[item - n] if item >= n else int(dataset[item])
        return int(dataset[rng.next_below(n)])

    def fresh_key() -> int:
        while True:
            k = rng.next_u64()
            if k not in existing:
                existing.add(k)
                inserted.append(k)
                return k

    def update_op() -> tuple[str, int, int]:
        return ("P", pick_read_key(), rng.next_u64())

    def insert_op() -> tuple[str, int, int]:
        return ("P", fresh_key(), rng.next_u64())

    ops: list[tuple[str, int, int]] = []
    kind = spec.kind
    while len(ops) < spec.n_ops:
        if kind is WorkloadKind.POINT_ONLY or kind is WorkloadKind.YCSB_C:
            ops.append(("R", pick_read_key(), 0))
        elif kind is WorkloadKind.WRITE_ONLY:
            ops.append(insert_op())
        elif kind is WorkloadKind.RANGE_ONLY:
            ops.append(("S", pick_read_key(), spec.range_len))
        elif kind is WorkloadKind.YCSB_A:
            ops.append(("R", pick_read_key(), 0) if rng.next_float() < 0.5 else update_op())
        elif kind is WorkloadKind.YCSB_B:
            ops.append(("R", pick_read_key(), 0) if rng.next_float() < 0.95 else update_op())
        elif kind is WorkloadKind.YCSB_D:
            ops.append(("R", pick_read_key(), 0) if rng.next_float() < 0.95 else insert_op())
        elif kind is WorkloadKind.YCSB_E:
            if rng.next_float() < 0.95:
                ops.append(("S", pick_read_key(), 1 + rng.next_below(99)))
            else:
                ops.append(insert_op())
        elif kind is WorkloadKind.YCSB_F:
            key = pick_read_key()
            ops.append(("R", key, 0))
            if len(ops) < spec.n_ops:
                ops.append(("P", key, rng.next_u64()))
        else:
            raise InvalidConfigError(f"unsupported workload {kind}")
    return ops


def format_op(op: str, key: int, arg: int) -> str:
    if op in ("P", "S"):
        return f"{op} {key} {arg}"
    if op in ("D", "R"):
        return f"{op} {key}"
    raise InvalidInputError(f"unknown op {op!r}")


def dump_ops(ops: list[tuple[str, int, int]], path: str) -> None:
    with open(path, "w") as fh:
        for op, key, arg in ops:
            fh.write(format_op(op, key, arg) + "\n")


def load_ops(path: str) -> list[tuple[str, int, int]]:
    ops = []
    try:
        with open(path) as fh:
            for ln_no, line in enumerate(fh, 1):
                parts = line.split()
                if not parts:
                    continue
                op = parts[0]
                if op in ("P", "S") and len(parts) == 3:
                    ops.append((op, int(parts[1]), int(parts[2])))
                elif op in ("D", "R") and len(parts) == 2:
                    ops.append((op, int(parts[1]), 0))
                else:
                    raise IngestError(f"{path}:{ln_no}: malformed op line {line!r}")
    except OSError as exc:
        raise IngestError(f"cannot read op stream {path}: {exc}") from exc
    return ops
