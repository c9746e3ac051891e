"""Distance measures over feature sequences and embeddings.

Audio-space distances operate on MFCC frame matrices: exact dynamic time
warping (the oracle), a multi-resolution approximation of it with a projected
search corridor, and the similarity-matrix-profile distance (median of the
per-window minimum distances of a similarity join). Latent-space distances
are plain Euclidean and cosine.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from .audio import FeatureSequence

DEFAULT_RADIUS = 1
DEFAULT_SUBSEQ_LEN = 20

AUDIO_MEASURES = ("dtw", "simple")
VECTOR_MEASURES = ("euclidean", "cosine")


def _as_frames(x) -> np.ndarray:
    if isinstance(x, FeatureSequence):
        return x.frames
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty [frames x dims] sequence")
    return arr


@njit(cache=True)
def _dtw_table(a, b, lo, hi):
    """Accumulated-cost table over a per-row column corridor [lo[i], hi[i]].

    Cell cost is the Euclidean distance between frames; steps are insertion,
    deletion and diagonal; cells outside the corridor stay +inf.
    """
    n = a.shape[0]
    m = b.shape[0]
    table = np.full((n + 1, m + 1), np.inf)
    table[0, 0] = 0.0
    for i in range(n):
        for j in range(lo[i], hi[i] + 1):
            d = 0.0
            for t in range(a.shape[1]):
                diff = a[i, t] - b[j, t]
                d += diff * diff
            d = np.sqrt(d)
            best = table[i, j]
            if table[i, j + 1] < best:
                best = table[i, j + 1]
            if table[i + 1, j] < best:
                best = table[i + 1, j]
            table[i + 1, j + 1] = d + best
    return table


@njit(cache=True)
def _backtrack(table):
    """Optimal boundary-to-boundary path through an accumulated-cost table."""
    n = table.shape[0] - 1
    m = table.shape[1] - 1
    path = np.empty((n + m - 1, 2), np.int64)
    pos = n + m - 1
    i = n
    j = m
    while True:
        pos -= 1
        path[pos, 0] = i - 1
        path[pos, 1] = j - 1
        if i == 1 and j == 1:
            break
        diag = table[i - 1, j - 1]
        up = table[i - 1, j]
        left = table[i, j - 1]
        if diag <= up and diag <= left:
            i -= 1
            j -= 1
        elif up <= left:
            i -= 1
        else:
            j -= 1
    return path[pos:]


def _full_ranges(n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.zeros(n, dtype=np.int64), np.full(n, m - 1, dtype=np.int64)


def dtw_exact(a, b) -> float:
    """Full O(nm) dynamic-time-warping cost between two feature sequences."""
    fa, fb = _as_frames(a), _as_frames(b)
    if fa.shape[1] != fb.shape[1]:
        raise ValueError("feature dimensionality mismatch")
    lo, hi = _full_ranges(fa.shape[0], fb.shape[0])
    return float(_dtw_table(fa, fb, lo, hi)[fa.shape[0], fb.shape[0]])


def _halve(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    if n % 2 == 0:
        return 0.5 * (x[0::2] + x[1::2])
    out = np.empty(((n + 1) // 2, x.shape[1]))
    out[:-1] = 0.5 * (x[0:-1:2] + x[1::2])
    out[-1] = x[-1]
    return out


def _expand_window(path: np.ndarray, n: int, m: int, radius: int):
    """Project a half-resolution path up and widen it by `radius`."""
    n2 = (n + 1) // 2
    m2 = (m + 1) // 2
    lo2 = np.full(n2, m2 - 1, dtype=np.int64)
    hi2 = np.zeros(n2, dtype=np.int64)
    for i2, j2 in path:
        r0 = max(0, i2 - radius)
        r1 = min(n2 - 1, i2 + radius)
        lo2[r0 : r1 + 1] = np.minimum(lo2[r0 : r1 + 1], max(0, j2 - radius))
        hi2[r0 : r1 + 1] = np.maximum(hi2[r0 : r1 + 1], min(m2 - 1, j2 + radius))
    rows = np.minimum(np.arange(n) // 2, n2 - 1)
    lo = np.clip(2 * lo2[rows], 0, m - 1)
    hi = np.clip(2 * hi2[rows] + 1, 0, m - 1)
    return lo.astype(np.int64), hi.astype(np.int64)


def _fastdtw(a: np.ndarray, b: np.ndarray, radius: int):
    n, m = a.shape[0], b.shape[0]
    if n <= radius + 2 or m <= radius + 2:
        lo, hi = _full_ranges(n, m)
        table = _dtw_table(a, b, lo, hi)
        return float(table[n, m]), _backtrack(table)
    _, coarse_path = _fastdtw(_halve(a), _halve(b), radius)
    lo, hi = _expand_window(coarse_path, n, m, radius)
    table = _dtw_table(a, b, lo, hi)
    return float(table[n, m]), _backtrack(table)


def dtw_fast(a, b, radius: int = DEFAULT_RADIUS) -> float:
    """Multi-resolution DTW approximation (coarsen, project, refine).

    Always an upper bound on dtw_exact; equal to it once the corridor covers
    the whole plane (radius >= max sequence length).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    fa, fb = _as_frames(a), _as_frames(b)
    if fa.shape[1] != fb.shape[1]:
        raise ValueError("feature dimensionality mismatch")
    cost, _ = _fastdtw(fa, fb, radius)
    return cost


def _windows(frames: np.ndarray, length: int) -> np.ndarray:
    view = np.lib.stride_tricks.sliding_window_view(frames, length, axis=0)
    # -> [n_windows, dims, length]; flatten consistently for both inputs
    return view.transpose(0, 2, 1).reshape(view.shape[0], -1)


def simple_profile(a, b, subseq_len: int = DEFAULT_SUBSEQ_LEN) -> np.ndarray:
    """Similarity-join profile: per window of `a`, the closest window of `b`."""
    fa, fb = _as_frames(a), _as_frames(b)
    if fa.shape[0] < subseq_len or fb.shape[0] < subseq_len:
        raise ValueError(f"sequences must have >= {subseq_len} frames")
    wa = _windows(fa, subseq_len)
    wb = _windows(fb, subseq_len)
    return cdist(wa, wb).min(axis=1)


def simple_distance(a, b, subseq_len: int = DEFAULT_SUBSEQ_LEN) -> float:
    """Median of the similarity-join profile of `a` against `b` (directional)."""
    return float(np.median(simple_profile(a, b, subseq_len)))


def euclidean(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    return float(np.linalg.norm(u - v))


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance undefined for zero vectors")
    return float(1.0 - np.dot(u, v) / (nu * nv))


_MEASURES = {
    "dtw": dtw_fast,
    "dtw_exact": dtw_exact,
    "simple": simple_distance,
    "euclidean": euclidean,
    "cosine": cosine,
}


def measure_fn(name: str, **params):
    if name not in _MEASURES:
        raise ValueError(f"unknown distance measure {name!r}")
    fn = _MEASURES[name]
    if name == "dtw" and "radius" in params:
        radius = params["radius"]
        return lambda a, b: fn(a, b, radius=radius)
    if name == "simple" and "subseq_len" in params:
        subseq_len = params["subseq_len"]
        return lambda a, b: fn(a, b, subseq_len=subseq_len)
    return fn


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Dense transformed-by-original distance block with its provenance tags."""

    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: np.ndarray
    measure: str
    space: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (len(self.row_ids), len(self.col_ids)):
            raise ValueError("matrix shape does not match id lists")
        if not np.all(np.isfinite(values)):
            raise ValueError("distance matrix contains non-finite entries")
        object.__setattr__(self, "values", values)

    def row(self, row_id: str) -> np.ndarray:
        return self.values[self.row_ids.index(row_id)]


def pairwise_distances(transformed, originals, measure: str, space: str,
                       **params) -> DistanceMatrix:
    """All-pairs distances between (id, representation) collections."""
    fn = measure_fn(measure, **params)
    row_ids = tuple(k for k, _ in transformed)
    col_ids = tuple(k for k, _ in originals)
    if measure in VECTOR_MEASURES:
        rows = np.vstack([np.asarray(r, dtype=np.float64).ravel() for _, r in transformed])
        cols = np.vstack([np.asarray(r, dtype=np.float64).ravel() for _, r in originals])
        if rows.shape[1] != cols.shape[1]:
            raise ValueError("dimension mismatch between rows and columns")
        values = cdist(rows, cols, metric=measure)
    else:
        values = np.empty((len(row_ids), len(col_ids)))
        for i, (_, a) in enumerate(transformed):
            for j, (_, b) in enumerate(originals):
                values[i, j] = fn(a, b)
    return DistanceMatrix(row_ids=row_ids, col_ids=col_ids, values=values,
                          measure=measure, space=space)


def write_distance_csv(matrix: DistanceMatrix, path, sidecar: dict | None = None) -> None:
    """CSV with original ids as header and transformed ids as first column,
    plus a JSON sidecar carrying the grouping tags."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *matrix.col_ids])
        for row_id, row in zip(matrix.row_ids, matrix.values):
            writer.writerow([row_id, *(repr(float(v)) for v in row)])
    meta = {"space": matrix.space, "measure": matrix.measure}
    if sidecar:
        meta.update(sidecar)
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True) + "\n")
