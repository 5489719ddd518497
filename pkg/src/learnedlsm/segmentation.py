"""Error-bounded piecewise-linear fitting over sorted key arrays.

Three algorithms, one contract.  Each fits lines ``v(k) = slope * (k - base_key)
+ intercept`` against targets ``position + 1`` such that every built key
satisfies ``|v(k) - (pos + 1)| <= epsilon - 0.25``.  A query then computes
``r = floor(v(k))`` and searches the inclusive range ``[r - epsilon,
r + epsilon - 1]``: exactly ``2 * epsilon`` candidate positions, always
containing the key's true position.  The quarter-unit margin keeps the
guarantee intact under float64 evaluation noise, which is orders of
magnitude smaller.

Keys are evaluated relative to each segment's first key, never in absolute
form; with 64-bit keys an absolute ``slope * key + intercept`` cancels
catastrophically once keys are large and locally dense.

All kernels are JIT-compiled with numba when available and run as plain
Python otherwise; both paths execute the same float64 operations in the
same order, so results are identical.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on numba-less installs
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


def corridor_half_width(epsilon: int) -> float:
    return float(epsilon) - 0.25


@njit(cache=True)
def _greedy_kernel(keys, hw, out_start, out_slope, out_icpt):
    """Cone greedy: one pass, slope interval pivoting on the midpoint of the
    segment's first two corridor points.  Returns the segment count."""
    n = keys.shape[0]
    count = 0
    s = 0
    while s < n:
        if s == n - 1:
            out_start[count] = s
            out_slope[count] = 0.0
            out_icpt[count] = float(s) + 1.0
            count += 1
            break
        base = keys[s]
        d2 = np.float64(keys[s + 1] - base)
        ox = d2 / 2.0
        oy = float(s) + 1.5
        lo = (0.5 - hw) / ox
        hi = (0.5 + hw) / ox
        j = s + 2
        while j < n:
            dx = np.float64(keys[j] - base) - ox
            y = float(j) + 1.0
            slo = (y - hw - oy) / dx
            shi = (y + hw - oy) / dx
            nlo = slo if slo > lo else lo
            nhi = shi if shi < hi else hi
            if nlo > nhi:
                break
            lo = nlo
            hi = nhi
            j += 1
        slope = (lo + hi) / 2.0
        out_start[count] = s
        out_slope[count] = slope
        out_icpt[count] = oy - slope * ox
        count += 1
        s = j
    return count


@njit(cache=True)
def _optimal_kernel(keys, hw, ux, uy, lx, ly, out_start, out_slope, out_icpt):
    """Optimal streaming piecewise-linear fit (convex-hull method).

    Maintains the upper corridor's lower hull and the lower corridor's upper
    hull plus the two extreme feasible lines; a segment closes when the new
    point's corridor misses the reachable band.  Emits the midpoint of the
    extreme lines in parameter space, which is feasible by convexity.
    Scratch hull arrays must have length >= n + 2.
    """
    n = keys.shape[0]
    count = 0
    s = 0
    while s < n:
        if s == n - 1:
            out_start[count] = s
            out_slope[count] = 0.0
            out_icpt[count] = float(s) + 1.0
            count += 1
            break
        base = keys[s]
        x1 = np.float64(keys[s + 1] - base)
        y0 = float(s) + 1.0
        y1 = float(s) + 2.0
        # Rectangle corners: min-slope line (r0 -> r2), max-slope line (r1 -> r3).
        r0x, r0y = 0.0, y0 + hw
        r1x, r1y = 0.0, y0 - hw
        r2x, r2y = x1, y1 - hw
        r3x, r3y = x1, y1 + hw
        ux[0], uy[0] = 0.0, y0 + hw
        ux[1], uy[1] = x1, y1 + hw
        lx[0], ly[0] = 0.0, y0 - hw
        lx[1], ly[1] = x1, y1 - hw
        un = 2
        ln = 2
        us = 0
        ls = 0
        j = s + 2
        while j < n:
            px = np.float64(keys[j] - base)
            y = float(j) + 1.0
            p1y = y + hw
            p2y = y - hw
            # Reachable band at px: [min_line(px), max_line(px)].
            s1x = r2x - r0x
            s1y = r2y - r0y
            s2x = r3x - r1x
            s2y = r3y - r1y
            if s1x * (p1y - r2y) - s1y * (px - r2x) < 0.0:
                break  # upper corridor point below the min-slope line
            if s2x * (p2y - r3y) - s2y * (px - r3x) > 0.0:
                break  # lower corridor point above the max-slope line
            # Tighten the max-slope line around p1 if p1 falls below it: the new
            # pivot minimizes the slope from a lower-hull point up to p1.
            if s2x * (p1y - r1y) - s2y * (px - r1x) < 0.0:
                k = ls
                while k + 1 < ln:
                    c = (lx[k] - px) * (ly[k + 1] - p1y) - (ly[k] - p1y) * (lx[k + 1] - px)
                    if c < 0.0:
                        k += 1
                    else:
                        break
                ls = k
                r1x, r1y = lx[k], ly[k]
                r3x, r3y = px, p1y
            # Tighten the min-slope line around p2 if p2 rises above it: the new
            # pivot maximizes the slope from an upper-hull point down to p2.
            s1x = r2x - r0x
            s1y = r2y - r0y
            if s1x * (p2y - r0y) - s1y * (px - r0x) > 0.0:
                k = us
                while k + 1 < un:
                    c = (ux[k] - px) * (uy[k + 1] - p2y) - (uy[k] - p2y) * (ux[k + 1] - px)
                    if c > 0.0:
                        k += 1
                    else:
                        break
                us = k
                r0x, r0y = ux[k], uy[k]
                r2x, r2y = px, p2y
            # Hull maintenance.
            while un - us >= 2 and (
                (ux[un - 1] - ux[un - 2]) * (p1y - uy[un - 1])
                - (uy[un - 1] - uy[un - 2]) * (px - ux[un - 1])
            ) <= 0.0:
                un -= 1
            ux[un], uy[un] = px, p1y
            un += 1
            while ln - ls >= 2 and (
                (lx[ln - 1] - lx[ln - 2]) * (p2y - ly[ln - 1])
                - (ly[ln - 1] - ly[ln - 2]) * (px - lx[ln - 1])
            ) >= 0.0:
                ln -= 1
            lx[ln], ly[ln] = px, p2y
            ln += 1
            j += 1
        slope1 = (r2y - r0y) / (r2x - r0x)
        slope2 = (r3y - r1y) / (r3x - r1x)
        icpt1 = r0y - slope1 * r0x
        icpt2 = r1y - slope2 * r1x
        out_start[count] = s
        out_slope[count] = (slope1 + slope2) / 2.0
        out_icpt[count] = (icpt1 + icpt2) / 2.0
        count += 1
        s = j
    return count


@njit(cache=True)
def _spline_kernel(keys, hw, out_idx):
    """Greedy spline corridor: emit the previous point once the cone from the
    last spline point can no longer reach the current one.  First and last
    keys are always emitted.  Returns the spline point count."""
    n = keys.shape[0]
    out_idx[0] = 0
    if n == 1:
        return 1
    count = 1
    b = 0
    bx = keys[0]
    by = 0.0
    lo = -np.inf
    hi = np.inf
    j = 1
    have_cone = False
    while j < n:
        dx = np.float64(keys[j] - bx)
        dy = float(j) - by
        if not have_cone:
            lo = (dy - hw) / dx
            hi = (dy + hw) / dx
            have_cone = True
            j += 1
            continue
        slope = dy / dx
        if slope < lo or slope > hi:
            b = j - 1
            out_idx[count] = b
            count += 1
            bx = keys[b]
            by = float(b)
            dx = np.float64(keys[j] - bx)
            dy = float(j) - by
            lo = (dy - hw) / dx
            hi = (dy + hw) / dx
            j += 1
            continue
        slo = (dy - hw) / dx
        shi = (dy + hw) / dx
        if slo > lo:
            lo = slo
        if shi < hi:
            hi = shi
        j += 1
    if out_idx[count - 1] != n - 1:
        out_idx[count] = n - 1
        count += 1
    return count


def check_sorted_unique(keys: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(keys, dtype=np.uint64)
    if arr.ndim != 1:
        raise InvalidInputError("keys must be a one-dimensional array")
    if arr.size > 1 and not np.all(arr[1:] > arr[:-1]):
        raise InvalidInputError("keys must be strictly increasing")
    return arr


def segment_greedy(keys: np.ndarray, epsilon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy cone segmentation.  Returns (starts, slopes, intercepts)."""
    if epsilon < 1:
        raise InvalidInputError("epsilon must be >= 1")
    arr = check_sorted_unique(keys)
    n = arr.size
    if n == 0:
        raise InvalidInputError("keys must be non-empty")
    starts = np.empty(n, dtype=np.int64)
    slopes = np.empty(n, dtype=np.float64)
    icpts = np.empty(n, dtype=np.float64)
    count = _greedy_kernel(arr, corridor_half_width(epsilon), starts, slopes, icpts)
    return starts[:count].copy(), slopes[:count].copy(), icpts[:count].copy()


def segment_optimal(keys: np.ndarray, epsilon: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Optimal streaming segmentation.  Returns (starts, slopes, intercepts)."""
    if epsilon < 1:
        raise InvalidInputError("epsilon must be >= 1")
    arr = check_sorted_unique(keys)
    n = arr.size
    if n == 0:
        raise InvalidInputError("keys must be non-empty")
    starts = np.empty(n, dtype=np.int64)
    slopes = np.empty(n, dtype=np.float64)
    icpts = np.empty(n, dtype=np.float64)
    ux = np.empty(n + 2, dtype=np.float64)
    uy = np.empty(n + 2, dtype=np.float64)
    lx = np.empty(n + 2, dtype=np.float64)
    ly = np.empty(n + 2, dtype=np.float64)
    count = _optimal_kernel(
        arr, corridor_half_width(epsilon), ux, uy, lx, ly, starts, slopes, icpts
    )
    return starts[:count].copy(), slopes[:count].copy(), icpts[:count].copy()


def fit_spline(keys: np.ndarray, epsilon: int) -> np.ndarray:
    """Greedy corridor spline.  Returns indices of the chosen spline points."""
    if epsilon < 1:
        raise InvalidInputError("epsilon must be >= 1")
    arr = check_sorted_unique(keys)
    if arr.size == 0:
        raise InvalidInputError("keys must be non-empty")
    out = np.empty(arr.size, dtype=np.int64)
    count = _spline_kernel(arr, corridor_half_width(epsilon), out)
    return out[:count].copy()


def segment_lengths(starts: np.ndarray, n: int) -> np.ndarray:
    ends = np.empty_like(starts)
    ends[:-1] = starts[1:]
    ends[-1] = n
    return ends - starts
