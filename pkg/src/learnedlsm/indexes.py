"""The six pluggable per-table index variants behind a single predict contract.

Every index answers ``predict(key) -> PositionRange`` over the sorted key
array it was built from, with the guarantee that a built key's true position
always falls inside the returned range.  Error-bounded kinds return ranges of
length at most ``2 * epsilon`` (their position boundary); the fence-pointer
baseline returns whole block ranges; the recursive-model index returns ranges
sized by its recorded per-leaf training errors.

Scalar ``predict`` and vectorized ``predict_many`` execute the same float64
arithmetic, so their results agree bit for bit; the vectorized form exists
because verification sweeps probe every built key.
"""

from __future__ import annotations

import math
import struct
import zlib
from typing import Iterator, NamedTuple

import numpy as np

from .core import IndexKind, IndexParams, PositionRange
from .errors import CorruptIndexError, EmptyIndexError, InvalidConfigError
from .segmentation import (
    check_sorted_unique,
    fit_spline,
    segment_greedy,
    segment_lengths,
    segment_optimal,
)

INDEX_HEADER_BYTES = 64  # analytic fixed cost per index in memory accounting
SEGMENT_BYTES = 40
FENCE_BYTES = 16
SPLINE_POINT_BYTES = 16
RMI_LEAF_BYTES = 32
RMI_TOP_BYTES = 24
BTREE_FANOUT = 64
BTREE_NODE_BYTES = BTREE_FANOUT * 16

_MAGIC = b"LIDX"
_VERSION = 1
_HEADER = struct.Struct("<4sHBB")
_PARAMS = struct.Struct("<IIIIII8x")
_U64 = struct.Struct("<Q")
_SEG = np.dtype([("first_key", "<u8"), ("slope", "<f8"), ("icpt", "<f8"),
                 ("start", "<u8"), ("len", "<u8")])
_FENCE = np.dtype([("first_key", "<u8"), ("block", "<u8")])
_SPLINE = np.dtype([("key", "<u8"), ("pos", "<u8")])
_LEAF = np.dtype([("slope", "<f8"), ("icpt", "<f8"), ("err_lo", "<u8"), ("err_hi", "<u8")])

_KIND_CODES = {
    None: 0,  # empty marker
    IndexKind.FENCE_POINTER: 1,
    IndexKind.PLR: 2,
    IndexKind.FITING_TREE: 3,
    IndexKind.PGM: 4,
    IndexKind.RADIX_SPLINE: 5,
    IndexKind.RMI: 6,
}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class SegmentView(NamedTuple):
    first_key: int
    slope: float
    intercept: float
    start: int
    length: int


class _SegmentArray:
    """Struct-of-arrays segment table: the atom shared by PLR/FIT/PGM levels."""

    __slots__ = ("first_keys", "slopes", "icpts", "starts", "lens", "n")

    def __init__(self, first_keys, slopes, icpts, starts, lens, n):
        self.first_keys = first_keys
        self.slopes = slopes
        self.icpts = icpts
        self.starts = starts
        self.lens = lens
        self.n = int(n)

    @classmethod
    def fit(cls, keys: np.ndarray, epsilon: int, optimal: bool) -> "_SegmentArray":
        fitter = segment_optimal if optimal else segment_greedy
        starts, slopes, icpts = fitter(keys, epsilon)
        lens = segment_lengths(starts, keys.size)
        return cls(keys[starts].copy(), slopes, icpts, starts, lens, keys.size)

    def __len__(self) -> int:
        return self.starts.size

    def locate(self, key: int) -> int:
        """Rightmost segment whose first key is <= key (clamped to 0)."""
        g = int(np.searchsorted(self.first_keys, key, side="right")) - 1
        return g if g >= 0 else 0

    def locate_many(self, keys: np.ndarray) -> np.ndarray:
        g = np.searchsorted(self.first_keys, keys, side="right").astype(np.int64) - 1
        return np.maximum(g, 0)

    def eval_scalar(self, g: int, key: int) -> float:
        diff = float(key - int(self.first_keys[g]))
        return self.slopes[g] * diff + self.icpts[g]

    def eval_many(self, g: np.ndarray, keys: np.ndarray) -> np.ndarray:
        kc = np.maximum(keys, self.first_keys[0])
        diff = (kc - self.first_keys[g]).astype(np.float64)
        return self.slopes[g] * diff + self.icpts[g]

    def views(self) -> Iterator[SegmentView]:
        for i in range(len(self)):
            yield SegmentView(int(self.first_keys[i]), float(self.slopes[i]),
                              float(self.icpts[i]), int(self.starts[i]), int(self.lens[i]))

    def to_records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=_SEG)
        rec["first_key"] = self.first_keys
        rec["slope"] = self.slopes
        rec["icpt"] = self.icpts
        rec["start"] = self.starts.astype(np.uint64)
        rec["len"] = self.lens.astype(np.uint64)
        return rec

    @classmethod
    def from_records(cls, rec: np.ndarray, n: int) -> "_SegmentArray":
        return cls(rec["first_key"].copy(), rec["slope"].copy(), rec["icpt"].copy(),
                   rec["start"].astype(np.int64), rec["len"].astype(np.int64), n)


def _floor_clamp_scalar(v: float, n: int) -> int:
    return min(max(math.floor(v), 0), n - 1)


def _floor_clamp_many(v: np.ndarray, n: int) -> np.ndarray:
    return np.clip(np.floor(v), 0, n - 1).astype(np.int64)


class LearnedIndex:
    """Common surface of all index variants."""

    kind: IndexKind
    params: IndexParams
    n: int

    def predict(self, key: int) -> PositionRange:
        raise NotImplementedError

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def memory_bytes(self) -> int:
        raise NotImplementedError

    def position_boundary(self) -> int:
        """Maximum length of any range this index can return."""
        raise NotImplementedError

    def _payload(self) -> bytes:
        raise NotImplementedError

    def _range_scalar(self, r: int, epsilon: int) -> PositionRange:
        lo = max(r - epsilon, 0)
        hi = min(r + epsilon - 1, self.n - 1)
        return PositionRange(lo, hi)

    def _range_many(self, r: np.ndarray, epsilon: int) -> tuple[np.ndarray, np.ndarray]:
        lo = np.maximum(r - epsilon, 0)
        hi = np.minimum(r + epsilon - 1, self.n - 1)
        return lo, hi


class EmptyIndex(LearnedIndex):
    """Marker for an index over zero keys; prediction is an error."""

    def __init__(self, kind: IndexKind | None = None, params: IndexParams | None = None):
        self.kind = kind
        self.params = params or IndexParams()
        self.n = 0

    def predict(self, key: int) -> PositionRange:
        raise EmptyIndexError("predict() on an index built over zero keys")

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise EmptyIndexError("predict() on an index built over zero keys")

    def memory_bytes(self) -> int:
        return INDEX_HEADER_BYTES

    def position_boundary(self) -> int:
        return 1

    def _payload(self) -> bytes:
        return _U64.pack(0)


class PLRIndex(LearnedIndex):
    """Greedy piecewise-linear segments with binary search over first keys."""

    kind = IndexKind.PLR

    def __init__(self, segs: _SegmentArray, params: IndexParams):
        self.segs = segs
        self.params = params
        self.n = segs.n

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams) -> "PLRIndex":
        return cls(_SegmentArray.fit(keys, params.epsilon, optimal=False), params)

    def _locate(self, key: int) -> int:
        return self.segs.locate(key)

    def predict(self, key: int) -> PositionRange:
        key = max(int(key), int(self.segs.first_keys[0]))
        g = self._locate(key)
        r = _floor_clamp_scalar(self.segs.eval_scalar(g, key), self.n)
        return self._range_scalar(r, self.params.epsilon)

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kc = np.maximum(np.asarray(keys, dtype=np.uint64), self.segs.first_keys[0])
        g = self.segs.locate_many(kc)
        r = _floor_clamp_many(self.segs.eval_many(g, kc), self.n)
        return self._range_many(r, self.params.epsilon)

    def memory_bytes(self) -> int:
        return SEGMENT_BYTES * len(self.segs) + INDEX_HEADER_BYTES

    def position_boundary(self) -> int:
        return 2 * self.params.epsilon

    def _payload(self) -> bytes:
        return _U64.pack(self.n) + _U64.pack(len(self.segs)) + self.segs.to_records().tobytes()


class _StaticBTree:
    """Static B+-tree over segment first keys, fixed fanout, built bottom-up.

    ``levels[0]`` is the segment first-key array itself (the leaf entries);
    higher levels hold each group's minimum key.
    """

    def __init__(self, leaf_keys: np.ndarray):
        self.levels = [leaf_keys]
        while self.levels[-1].size > BTREE_FANOUT:
            self.levels.append(self.levels[-1][::BTREE_FANOUT].copy())

    def node_count(self) -> int:
        count = 0
        for lvl in self.levels:
            count += -(-lvl.size // BTREE_FANOUT) if lvl is not self.levels[-1] else 1
        return count

    def descend(self, key: int) -> int:
        top = self.levels[-1]
        j = int(np.searchsorted(top, key, side="right")) - 1
        if j < 0:
            j = 0
        for t in range(len(self.levels) - 2, -1, -1):
            lvl = self.levels[t]
            lo = j * BTREE_FANOUT
            hi = min(lo + BTREE_FANOUT, lvl.size)
            p = int(np.searchsorted(lvl[lo:hi], key, side="right")) - 1
            j = lo + (p if p >= 0 else 0)
        return j


class FITingTreeIndex(PLRIndex):
    """Same greedy segments as PLR, located through a B+-tree instead."""

    kind = IndexKind.FITING_TREE

    def __init__(self, segs: _SegmentArray, params: IndexParams):
        super().__init__(segs, params)
        self.tree = _StaticBTree(segs.first_keys)

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams) -> "FITingTreeIndex":
        return cls(_SegmentArray.fit(keys, params.epsilon, optimal=False), params)

    def _locate(self, key: int) -> int:
        return self.tree.descend(key)

    def memory_bytes(self) -> int:
        return (SEGMENT_BYTES * len(self.segs)
                + BTREE_NODE_BYTES * self.tree.node_count()
                + INDEX_HEADER_BYTES)


class PGMIndex(LearnedIndex):
    """Recursive optimal segmentation: leaf level over keys, parents over the
    first keys of the level below, topmost level a single segment."""

    kind = IndexKind.PGM

    def __init__(self, levels: list[_SegmentArray], params: IndexParams):
        self.levels = levels
        self.params = params
        self.n = levels[0].n

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams) -> "PGMIndex":
        levels = [_SegmentArray.fit(keys, params.epsilon, optimal=True)]
        while len(levels[-1]) > 1:
            below = levels[-1]
            levels.append(_SegmentArray.fit(below.first_keys, params.epsilon_recursive,
                                            optimal=True))
        return cls(levels, params)

    def predict(self, key: int) -> PositionRange:
        key = max(int(key), int(self.levels[0].first_keys[0]))
        eps_r = self.params.epsilon_recursive
        g = 0
        for t in range(len(self.levels) - 1, 0, -1):
            level = self.levels[t]
            child = self.levels[t - 1]
            v = level.eval_scalar(g, key)
            r = _floor_clamp_scalar(v, len(child))
            g = self._search_child(child.first_keys, key, r, eps_r)
        leaf = self.levels[0]
        r = _floor_clamp_scalar(leaf.eval_scalar(g, key), self.n)
        return self._range_scalar(r, self.params.epsilon)

    @staticmethod
    def _search_child(first_keys: np.ndarray, key: int, r: int, eps_r: int) -> int:
        """Rightmost child with first_key <= key, searched inside the predicted
        window and falling back to a full binary search if the window missed."""
        m = first_keys.size
        lo = max(r - eps_r - 1, 0)
        hi = min(r + eps_r + 1, m - 1)
        g = lo + int(np.searchsorted(first_keys[lo:hi + 1], key, side="right")) - 1
        if g < lo or (g == hi and g + 1 < m and int(first_keys[g + 1]) <= key):
            g = int(np.searchsorted(first_keys, key, side="right")) - 1
        return g if g >= 0 else 0

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        leaf = self.levels[0]
        kc = np.maximum(np.asarray(keys, dtype=np.uint64), leaf.first_keys[0])
        g = leaf.locate_many(kc)
        r = _floor_clamp_many(leaf.eval_many(g, kc), self.n)
        return self._range_many(r, self.params.epsilon)

    def memory_bytes(self) -> int:
        return SEGMENT_BYTES * sum(len(lvl) for lvl in self.levels) + INDEX_HEADER_BYTES

    def position_boundary(self) -> int:
        return 2 * self.params.epsilon

    def _payload(self) -> bytes:
        parts = [_U64.pack(self.n), struct.pack("<B", len(self.levels))]
        for lvl in self.levels:
            parts.append(_U64.pack(len(lvl)))
            parts.append(lvl.to_records().tobytes())
        return b"".join(parts)


class RadixSplineIndex(LearnedIndex):
    """Spline points plus a radix table over their key prefixes."""

    kind = IndexKind.RADIX_SPLINE

    def __init__(self, spline_keys, spline_pos, radix_table, params: IndexParams, n: int):
        self.spline_keys = spline_keys
        self.spline_pos = spline_pos
        self.radix_table = radix_table
        self.params = params
        self.n = n
        self.min_key = int(spline_keys[0])
        self.max_key = int(spline_keys[-1])
        span = self.max_key - self.min_key
        self.shift = max(span.bit_length() - params.radix_bits, 0)

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams) -> "RadixSplineIndex":
        idx = fit_spline(keys, params.epsilon)
        spline_keys = keys[idx].copy()
        spline_pos = idx.astype(np.uint64)
        span = int(keys[-1]) - int(keys[0])
        shift = max(span.bit_length() - params.radix_bits, 0)
        prefixes = (spline_keys - keys[0]) >> np.uint64(shift)
        table_len = (1 << params.radix_bits) + 1
        radix_table = np.searchsorted(prefixes, np.arange(table_len, dtype=np.uint64),
                                      side="left").astype(np.int64)
        return cls(spline_keys, spline_pos, radix_table, params, keys.size)

    def _bracket(self, key: int) -> int:
        """First spline index with key >= the probe, via the radix table."""
        prefix = (key - self.min_key) >> self.shift
        lo = int(self.radix_table[prefix])
        hi = min(int(self.radix_table[prefix + 1]) + 1, self.spline_keys.size)
        return lo + int(np.searchsorted(self.spline_keys[lo:hi], key, side="left"))

    def _interp_scalar(self, j: int, key: int) -> float:
        if j == 0 or self.spline_keys.size == 1:
            return float(self.spline_pos[0]) + 1.0
        if j >= self.spline_keys.size:
            j = self.spline_keys.size - 1
        ka = int(self.spline_keys[j - 1])
        pa = float(self.spline_pos[j - 1])
        slope = (float(self.spline_pos[j]) - pa) / float(int(self.spline_keys[j]) - ka)
        return pa + float(key - ka) * slope + 1.0

    def predict(self, key: int) -> PositionRange:
        key = max(int(key), self.min_key)
        if key <= self.max_key:
            j = self._bracket(key)
        else:
            j = self.spline_keys.size
        r = _floor_clamp_scalar(self._interp_scalar(j, key), self.n)
        return self._range_scalar(r, self.params.epsilon)

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kc = np.maximum(np.asarray(keys, dtype=np.uint64), np.uint64(self.min_key))
        if self.spline_keys.size == 1:
            r = np.full(kc.shape, min(int(self.spline_pos[0]) + 1, self.n - 1),
                        dtype=np.int64)
            return self._range_many(r, self.params.epsilon)
        j = np.searchsorted(self.spline_keys, kc, side="left").astype(np.int64)
        jc = np.clip(j, 1, self.spline_keys.size - 1)
        ka = self.spline_keys[jc - 1]
        pa = self.spline_pos[jc - 1].astype(np.float64)
        dx = (self.spline_keys[jc] - ka).astype(np.float64)
        slope = (self.spline_pos[jc].astype(np.float64) - pa) / dx
        v = pa + (kc - ka).astype(np.float64) * slope + 1.0
        v = np.where(j == 0, float(self.spline_pos[0]) + 1.0, v)
        r = _floor_clamp_many(v, self.n)
        return self._range_many(r, self.params.epsilon)

    def memory_bytes(self) -> int:
        return (SPLINE_POINT_BYTES * self.spline_keys.size
                + 8 * self.radix_table.size + INDEX_HEADER_BYTES)

    def position_boundary(self) -> int:
        return 2 * self.params.epsilon

    def _payload(self) -> bytes:
        rec = np.empty(self.spline_keys.size, dtype=_SPLINE)
        rec["key"] = self.spline_keys
        rec["pos"] = self.spline_pos
        return (_U64.pack(self.n) + _U64.pack(rec.size) + rec.tobytes()
                + _U64.pack(self.radix_table.size)
                + self.radix_table.astype("<u8").tobytes())


class RMIIndex(LearnedIndex):
    """Two-level recursive model: an equal-width linear router over the key
    span plus least-squares linear leaves with recorded training errors."""

    kind = IndexKind.RMI

    def __init__(self, top_slope, top_icpt, leaf_slopes, leaf_icpts,
                 err_lo, err_hi, params: IndexParams, n: int):
        self.top_slope = float(top_slope)
        self.top_icpt = float(top_icpt)
        self.leaf_slopes = leaf_slopes
        self.leaf_icpts = leaf_icpts
        self.err_lo = err_lo
        self.err_hi = err_hi
        self.params = params
        self.n = n

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams) -> "RMIIndex":
        if params.rmi_leaf_target > 0:
            return cls._build_for_target(keys, params)
        return cls._build_fixed(keys, params, params.leaf_count)

    @classmethod
    def _build_for_target(cls, keys: np.ndarray, params: IndexParams) -> "RMIIndex":
        """Exponential search over the leaf count: double until the recorded
        boundary fits the target, then bisect back to the smallest passing
        count.  Capped at one leaf per key; past the cap the achieved
        boundary is simply reported."""
        target = params.rmi_leaf_target
        leaf_count = 1
        index = cls._build_fixed(keys, params, leaf_count)
        while index.position_boundary() > target and leaf_count < keys.size:
            leaf_count *= 2
            index = cls._build_fixed(keys, params, leaf_count)
        if index.position_boundary() > target:
            return index
        lo, hi, best = leaf_count // 2 + 1, leaf_count, index
        while lo < hi:
            mid = (lo + hi) // 2
            cand = cls._build_fixed(keys, params, mid)
            if cand.position_boundary() <= target:
                best, hi = cand, mid
            else:
                lo = mid + 1
        return best

    @classmethod
    def _build_fixed(cls, keys: np.ndarray, params: IndexParams,
                     requested_leaves: int) -> "RMIIndex":
        n = keys.size
        leaf_count = min(requested_leaves, max(n, 1))
        kf = keys.astype(np.float64)
        if n == 1 or kf[-1] == kf[0]:
            top_slope, top_icpt = 0.0, 0.0
        else:
            top_slope = leaf_count / (kf[-1] - kf[0])
            top_icpt = -top_slope * kf[0]
        g = _floor_clamp_many(top_slope * kf + top_icpt, leaf_count)
        bounds = np.searchsorted(g, np.arange(leaf_count + 1), side="left")
        counts = np.diff(bounds)
        nonempty = counts > 0
        # fitted target: position + 0.5, so floor() of a perfect fit hits the
        # position exactly and records zero error
        pos1 = np.arange(n, dtype=np.float64) + 0.5

        # per-leaf least squares in leaf-local key coordinates, all leaves at
        # once via segmented reductions
        starts = np.minimum(bounds[:-1], max(n - 1, 0))
        x = kf - kf[starts][g]
        red = lambda arr: np.add.reduceat(arr, starts) if n else np.zeros(leaf_count)
        s_x = red(x)
        s_y = red(pos1)
        s_xx = red(x * x)
        s_xy = red(x * pos1)
        m = counts.astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            den = s_xx - s_x * s_x / np.where(m > 0, m, 1.0)
            num = s_xy - s_x * s_y / np.where(m > 0, m, 1.0)
            slopes = np.where((counts > 1) & (den > 0.0), num / np.where(den != 0, den, 1.0), 0.0)
            icpt_local = np.where(m > 0, s_y / np.where(m > 0, m, 1.0), 0.0) \
                - slopes * np.where(m > 0, s_x / np.where(m > 0, m, 1.0), 0.0)
        icpts = icpt_local - slopes * kf[starts]
        # empty leaves predict the position carried in from the left
        if not np.all(nonempty):
            carried = np.where(bounds[:-1] > 0, pos1[np.maximum(bounds[:-1] - 1, 0)], 0.5)
            icpts = np.where(nonempty, icpts, carried)

        v = slopes[g] * kf + icpts[g]
        r = _floor_clamp_many(v, n)
        d = r - np.arange(n, dtype=np.int64)
        err_lo = np.zeros(leaf_count, dtype=np.int64)
        err_hi = np.zeros(leaf_count, dtype=np.int64)
        if n:
            hi_d = np.maximum.reduceat(d, starts)
            lo_d = np.minimum.reduceat(d, starts)
            err_lo[nonempty] = np.maximum(hi_d[nonempty], 0)
            err_hi[nonempty] = np.maximum(-lo_d[nonempty], 0)
        return cls(top_slope, top_icpt, slopes, icpts,
                   err_lo.astype(np.uint64), err_hi.astype(np.uint64), params, n)

    def _route(self, kf: float) -> int:
        return min(max(math.floor(self.top_slope * kf + self.top_icpt), 0),
                   self.leaf_slopes.size - 1)

    def predict(self, key: int) -> PositionRange:
        kf = float(int(key))
        j = self._route(kf)
        r = _floor_clamp_scalar(self.leaf_slopes[j] * kf + self.leaf_icpts[j], self.n)
        lo = max(r - int(self.err_lo[j]), 0)
        hi = min(r + int(self.err_hi[j]), self.n - 1)
        return PositionRange(lo, hi)

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        kf = np.asarray(keys, dtype=np.uint64).astype(np.float64)
        j = _floor_clamp_many(self.top_slope * kf + self.top_icpt, self.leaf_slopes.size)
        r = _floor_clamp_many(self.leaf_slopes[j] * kf + self.leaf_icpts[j], self.n)
        lo = np.maximum(r - self.err_lo[j].astype(np.int64), 0)
        hi = np.minimum(r + self.err_hi[j].astype(np.int64), self.n - 1)
        return lo, hi

    def memory_bytes(self) -> int:
        return RMI_LEAF_BYTES * self.leaf_slopes.size + RMI_TOP_BYTES + INDEX_HEADER_BYTES

    def position_boundary(self) -> int:
        spans = self.err_lo.astype(np.int64) + self.err_hi.astype(np.int64) + 1
        return int(spans.max()) if spans.size else 1

    def _payload(self) -> bytes:
        rec = np.empty(self.leaf_slopes.size, dtype=_LEAF)
        rec["slope"] = self.leaf_slopes
        rec["icpt"] = self.leaf_icpts
        rec["err_lo"] = self.err_lo
        rec["err_hi"] = self.err_hi
        return (_U64.pack(self.n) + _U64.pack(rec.size)
                + struct.pack("<dd", self.top_slope, self.top_icpt) + rec.tobytes())


class FencePointerIndex(LearnedIndex):
    """Classic baseline: the first key of every fixed-size block of entries."""

    kind = IndexKind.FENCE_POINTER

    def __init__(self, fence_keys: np.ndarray, entries_per_block: int,
                 params: IndexParams, n: int):
        self.fence_keys = fence_keys
        self.entries_per_block = int(entries_per_block)
        self.params = params
        self.n = n

    @classmethod
    def build(cls, keys: np.ndarray, params: IndexParams, entry_size: int) -> "FencePointerIndex":
        epb = params.fp_block_bytes // entry_size
        if epb < 1:
            raise InvalidConfigError(
                f"fp_block_bytes={params.fp_block_bytes} holds no entry of {entry_size} bytes"
            )
        fence_keys = keys[::epb].copy()
        return cls(fence_keys, epb, params, keys.size)

    def predict(self, key: int) -> PositionRange:
        b = int(np.searchsorted(self.fence_keys, key, side="right")) - 1
        if b < 0:
            b = 0
        lo = b * self.entries_per_block
        hi = min(lo + self.entries_per_block, self.n) - 1
        return PositionRange(lo, hi)

    def predict_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b = np.searchsorted(self.fence_keys, np.asarray(keys, dtype=np.uint64),
                            side="right").astype(np.int64) - 1
        b = np.maximum(b, 0)
        lo = b * self.entries_per_block
        hi = np.minimum(lo + self.entries_per_block, self.n) - 1
        return lo, hi

    def memory_bytes(self) -> int:
        return FENCE_BYTES * self.fence_keys.size + INDEX_HEADER_BYTES

    def position_boundary(self) -> int:
        return self.entries_per_block

    def _payload(self) -> bytes:
        rec = np.empty(self.fence_keys.size, dtype=_FENCE)
        rec["first_key"] = self.fence_keys
        rec["block"] = np.arange(self.fence_keys.size, dtype=np.uint64)
        return (_U64.pack(self.n) + _U64.pack(self.entries_per_block)
                + _U64.pack(rec.size) + rec.tobytes())


def build_index(kind: IndexKind, params: IndexParams, keys: np.ndarray,
                entry_size: int | None = None) -> LearnedIndex:
    """Build the selected index variant over a strictly increasing key array.

    An empty array yields an explicit empty-index marker.  The fence-pointer
    kind needs ``entry_size`` to derive its entries-per-block count.
    """
    params.validate(kind)
    arr = check_sorted_unique(np.asarray(keys, dtype=np.uint64))
    if arr.size == 0:
        return EmptyIndex(kind, params)
    if kind is IndexKind.PLR:
        return PLRIndex.build(arr, params)
    if kind is IndexKind.FITING_TREE:
        return FITingTreeIndex.build(arr, params)
    if kind is IndexKind.PGM:
        return PGMIndex.build(arr, params)
    if kind is IndexKind.RADIX_SPLINE:
        return RadixSplineIndex.build(arr, params)
    if kind is IndexKind.RMI:
        return RMIIndex.build(arr, params)
    if kind is IndexKind.FENCE_POINTER:
        if entry_size is None:
            raise InvalidConfigError("fence-pointer index needs the table's entry size")
        return FencePointerIndex.build(arr, params, entry_size)
    raise InvalidConfigError(f"unsupported index kind {kind}")


def _pack_params(params: IndexParams) -> bytes:
    return _PARAMS.pack(params.epsilon, params.epsilon_recursive, params.radix_bits,
                        params.leaf_count, params.fp_block_bytes, params.rmi_leaf_target)


def _unpack_params(raw: bytes) -> IndexParams:
    eps, eps_r, rb, lc, fpb, target = _PARAMS.unpack(raw)
    return IndexParams(epsilon=eps, epsilon_recursive=eps_r, radix_bits=rb,
                       leaf_count=lc, fp_block_bytes=fpb, rmi_leaf_target=target)


def serialize_index(index: LearnedIndex) -> bytes:
    payload = index._payload()
    head = _HEADER.pack(_MAGIC, _VERSION, _KIND_CODES[index.kind], 0)
    return (head + _pack_params(index.params) + _U64.pack(len(payload))
            + payload + struct.pack("<I", zlib.crc32(payload)))


def deserialize_index(raw: bytes) -> LearnedIndex:
    head_len = _HEADER.size + _PARAMS.size + 8
    if len(raw) < head_len + 4:
        raise CorruptIndexError("serialized index truncated")
    magic, version, code, _ = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise CorruptIndexError("bad index magic")
    if version != _VERSION:
        raise CorruptIndexError(f"unsupported index version {version}")
    if code not in _CODE_KINDS:
        raise CorruptIndexError(f"unknown index kind code {code}")
    params = _unpack_params(raw[_HEADER.size:_HEADER.size + _PARAMS.size])
    (payload_len,) = _U64.unpack_from(raw, _HEADER.size + _PARAMS.size)
    if len(raw) < head_len + payload_len + 4:
        raise CorruptIndexError("serialized index truncated")
    payload = raw[head_len:head_len + payload_len]
    (crc,) = struct.unpack_from("<I", raw, head_len + payload_len)
    if zlib.crc32(payload) != crc:
        raise CorruptIndexError("index payload checksum mismatch")
    kind = _CODE_KINDS[code]
    return _decode_payload(kind, params, payload)


def _read_u64(buf: bytes, off: int) -> tuple[int, int]:
    return _U64.unpack_from(buf, off)[0], off + 8


def _decode_payload(kind: IndexKind | None, params: IndexParams, payload: bytes) -> LearnedIndex:
    try:
        n, off = _read_u64(payload, 0)
        if kind is None or n == 0:
            return EmptyIndex(kind, params)
        if kind in (IndexKind.PLR, IndexKind.FITING_TREE):
            count, off = _read_u64(payload, off)
            rec = np.frombuffer(payload, dtype=_SEG, count=count, offset=off)
            segs = _SegmentArray.from_records(rec, n)
            cls = PLRIndex if kind is IndexKind.PLR else FITingTreeIndex
            return cls(segs, params)
        if kind is IndexKind.PGM:
            (level_count,) = struct.unpack_from("<B", payload, off)
            off += 1
            levels = []
            size = n
            for _ in range(level_count):
                count, off = _read_u64(payload, off)
                rec = np.frombuffer(payload, dtype=_SEG, count=count, offset=off)
                off += count * _SEG.itemsize
                levels.append(_SegmentArray.from_records(rec, size))
                size = count
            return PGMIndex(levels, params)
        if kind is IndexKind.RADIX_SPLINE:
            count, off = _read_u64(payload, off)
            rec = np.frombuffer(payload, dtype=_SPLINE, count=count, offset=off)
            off += count * _SPLINE.itemsize
            table_len, off = _read_u64(payload, off)
            table = np.frombuffer(payload, dtype="<u8", count=table_len,
                                  offset=off).astype(np.int64)
            return RadixSplineIndex(rec["key"].copy(), rec["pos"].copy(), table, params, n)
        if kind is IndexKind.RMI:
            count, off = _read_u64(payload, off)
            top_slope, top_icpt = struct.unpack_from("<dd", payload, off)
            off += 16
            rec = np.frombuffer(payload, dtype=_LEAF, count=count, offset=off)
            return RMIIndex(top_slope, top_icpt, rec["slope"].copy(), rec["icpt"].copy(),
                            rec["err_lo"].copy(), rec["err_hi"].copy(), params, n)
        if kind is IndexKind.FENCE_POINTER:
            epb, off = _read_u64(payload, off)
            count, off = _read_u64(payload, off)
            rec = np.frombuffer(payload, dtype=_FENCE, count=count, offset=off)
            return FencePointerIndex(rec["first_key"].copy(), epb, params, n)
    except (struct.error, ValueError) as exc:
        raise CorruptIndexError(f"malformed index payload: {exc}") from None
    raise CorruptIndexError(f"unsupported index kind {kind}")
