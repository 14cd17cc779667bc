"""Hot inner-loop kernels: BPE pair scans and int8-weight matmul.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
Setting ``INDICLM_NUMBA=0`` (or numba being unimportable) forces the numpy
path everywhere; both paths compute the same function. With numba enabled,
dispatch follows what measures faster: the jitted merge scan always, the
jitted int8 matmul only for short activation blocks (token-by-token
decoding), and the numpy pair counter always (its sort wins at every size
tried). Token streams are int32 arrays where -1 is a break sentinel that no
pair may cross.

``benchmarks/bench_kernels.py`` times the implementation pairs against each
other.
"""

from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("INDICLM_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "no", "off")

try:
    if not _WANT_NUMBA:
        raise ImportError
    from numba import njit

    USING_NUMBA = True
except ImportError:
    USING_NUMBA = False


SENTINEL = -1


# ---------------------------------------------------------------------------
# pure-numpy reference implementations


def _pair_counts_np(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if flat.size < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    left = flat[:-1]
    right = flat[1:]
    valid = (left >= 0) & (right >= 0)
    keys = (left[valid].astype(np.int64) << 32) | right[valid].astype(np.int64)
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq, counts.astype(np.int64)


def _apply_pair_np(flat: np.ndarray, a: int, b: int, new_id: int) -> np.ndarray:
    if flat.size < 2:
        return flat.copy()
    hits = np.nonzero((flat[:-1] == a) & (flat[1:] == b))[0]
    if hits.size == 0:
        return flat.copy()
    # left-to-right non-overlapping resolution; loop runs over matches only
    kept = []
    last = -2
    for i in hits:
        if i > last + 1:
            kept.append(i)
            last = i
    kept = np.asarray(kept)
    out = flat.copy()
    out[kept] = new_id
    keep_mask = np.ones(flat.size, bool)
    keep_mask[kept + 1] = False
    return out[keep_mask]


def _matmul_int8_np(x: np.ndarray, w_q: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return (x @ w_q.astype(np.float32)) * scales


# ---------------------------------------------------------------------------
# numba implementations

if USING_NUMBA:

    @njit(cache=True)
    def _pair_counts_nb(flat):  # pragma: no cover - benchmark comparison only
        # sort-based run-length counting; numpy's sort still wins, so the
        # public dispatch never picks this variant
        n = flat.size
        keys = np.empty(max(n - 1, 0), np.int64)
        m = 0
        for i in range(n - 1):
            a = flat[i]
            b = flat[i + 1]
            if a < 0 or b < 0:
                continue
            keys[m] = (np.int64(a) << 32) | np.int64(b)
            m += 1
        keys = np.sort(keys[:m])
        uniq = np.empty(m, np.int64)
        counts = np.empty(m, np.int64)
        u = -1
        for i in range(m):
            if u >= 0 and keys[i] == uniq[u]:
                counts[u] += 1
            else:
                u += 1
                uniq[u] = keys[i]
                counts[u] = 1
        return uniq[: u + 1], counts[: u + 1]

    @njit(cache=True)
    def _apply_pair_nb(flat, a, b, new_id):  # pragma: no cover
        n = flat.size
        out = np.empty(n, flat.dtype)
        i = 0
        j = 0
        while i < n:
            if i + 1 < n and flat[i] == a and flat[i + 1] == b:
                out[j] = new_id
                i += 2
            else:
                out[j] = flat[i]
                i += 1
            j += 1
        return out[:j]

    @njit(cache=True)
    def _matmul_int8_nb(x, w_q, scales):  # pragma: no cover
        # row-major accumulation: the inner loop streams one contiguous
        # weight row, which LLVM vectorizes (int8 -> f32 convert + fma)
        t, k = x.shape
        n = w_q.shape[1]
        out = np.zeros((t, n), np.float32)
        for row in range(t):
            acc = out[row]
            for inner in range(k):
                xv = x[row, inner]
                if xv == 0.0:
                    continue
                w_row = w_q[inner]
                for col in range(n):
                    acc[col] += xv * np.float32(w_row[col])
            for col in range(n):
                acc[col] *= scales[col]
        return out


def pair_counts(flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of adjacent (a, b) pairs, keyed as (a << 32) | b, sorted by key.

    Pairs touching the break sentinel are not counted. Dispatches to the
    numpy implementation on both paths: its sort beats the jitted one here
    (see benchmarks/bench_kernels.py), the numba variant stays for
    comparison.
    """
    flat = np.ascontiguousarray(flat, np.int32)
    return _pair_counts_np(flat)


def apply_pair(flat: np.ndarray, a: int, b: int, new_id: int) -> np.ndarray:
    """Replace each left-to-right non-overlapping (a, b) with new_id."""
    flat = np.ascontiguousarray(flat, np.int32)
    if USING_NUMBA:
        return _apply_pair_nb(flat, np.int32(a), np.int32(b), np.int32(new_id))
    return _apply_pair_np(flat, a, b, new_id)


# below this many activation rows the jitted kernel beats casting the whole
# weight matrix for BLAS (token-by-token decoding is the T=1 case)
_NUMBA_GEMM_MAX_ROWS = 16


def matmul_int8(x: np.ndarray, w_q: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """x @ w_q with the int8 weight payload, scaled per output channel.

    Accumulation is float32 on both paths; results agree up to summation
    order.
    """
    x = np.ascontiguousarray(x, np.float32)
    w_q = np.ascontiguousarray(w_q, np.int8)
    scales = np.ascontiguousarray(scales, np.float32)
    if USING_NUMBA and x.shape[0] <= _NUMBA_GEMM_MAX_ROWS:
        return _matmul_int8_nb(x, w_q, scales)
    return _matmul_int8_np(x, w_q, scales)


def unpack_pair_key(key: int) -> tuple[int, int]:
    return int(key >> 32), int(key & 0xFFFFFFFF)
