"""Bulk numeric kernels with a numba path and a pure-numpy fallback.

Set ``SEEBENCH_NUMBA=0`` to force the numpy path (also used when numba is
not importable). Integer kernels agree exactly across paths, float kernels
to rounding.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "SEEBENCH_NUMBA"


def _want_numba() -> bool:
    return os.environ.get(_ENV_FLAG, "1").strip().lower() not in ("0", "false", "no", "off")


try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

USE_NUMBA = _want_numba() and njit is not None


# -- attribute edit distance -------------------------------------------------
# Attribute maps are encoded as int8 rows of length 3 (size, color, material);
# -1 marks an empty slot, otherwise the value index within the slot.

def edit_distance_matrix_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.int8)
    b = np.asarray(b, dtype=np.int8)
    # Each slot costs one edit whenever the two maps disagree on it.
    return (a[:, None, :] != b[None, :, :]).sum(axis=2).astype(np.int64)


def _edit_distance_matrix_loop(a, b):
    n, m, k = a.shape[0], b.shape[0], a.shape[1]
    out = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            d = 0
            for s in range(k):
                if a[i, s] != b[j, s]:
                    d += 1
            out[i, j] = d
    return out


# -- normalized spatial entropy ----------------------------------------------

def spread_rows_numpy(grids: np.ndarray) -> np.ndarray:
    g = np.asarray(grids, dtype=np.float64)
    totals = g.sum(axis=1, keepdims=True)
    p = g / totals
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, -p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    cells = g.shape[1]
    if cells <= 1:
        return np.zeros(g.shape[0])
    return terms.sum(axis=1) / np.log(cells)


def _spread_rows_loop(grids):
    n, cells = grids.shape
    out = np.zeros(n, dtype=np.float64)
    if cells <= 1:
        return out
    denom = np.log(cells)
    for i in range(n):
        total = 0.0
        for j in range(cells):
            total += grids[i, j]
        h = 0.0
        for j in range(cells):
            p = grids[i, j] / total
            if p > 0.0:
                h -= p * np.log(p)
        out[i] = h / denom
    return out


if njit is not None:
    _edit_distance_matrix_jit = njit(cache=True)(_edit_distance_matrix_loop)
    _spread_rows_jit = njit(cache=True)(_spread_rows_loop)
else:  # pragma: no cover
    _edit_distance_matrix_jit = _edit_distance_matrix_loop
    _spread_rows_jit = _spread_rows_loop


def edit_distance_matrix_numba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _edit_distance_matrix_jit(
        np.ascontiguousarray(a, dtype=np.int8), np.ascontiguousarray(b, dtype=np.int8)
    )


def spread_rows_numba(grids: np.ndarray) -> np.ndarray:
    return _spread_rows_jit(np.ascontiguousarray(grids, dtype=np.float64))


def edit_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise attribute edit distances between two encoded attribute batches."""
    if USE_NUMBA:
        return edit_distance_matrix_numba(a, b)
    return edit_distance_matrix_numpy(a, b)


def spread_rows(grids: np.ndarray) -> np.ndarray:
    """Normalized entropy of each row of a non-negative (n, cells) array.

    Rows are normalized to unit mass first; callers guarantee positive totals.
    """
    if USE_NUMBA:
        return spread_rows_numba(grids)
    return spread_rows_numpy(grids)
