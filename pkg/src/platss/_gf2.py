"""GF(2) rank kernel: a compiled core when available, int-bitset fallback."""

from __future__ import annotations

try:
    from . import _gf2core

    HAVE_NATIVE = True
except ImportError:  # pragma: no cover - depends on build environment
    _gf2core = None
    HAVE_NATIVE = False


def rank_bitrows(rows: list[int], ncols: int) -> int:
    """Rank over GF(2) of a matrix given as int bitmask rows."""
    if HAVE_NATIVE and ncols and rows:
        return _gf2core.rank_packed(_pack(rows, ncols), ncols)
    return _rank_py(rows)


def _rank_py(rows: list[int]) -> int:
    pivots: list[int] = []
    for row in rows:
        for p in pivots:
            low = p & -p
            if row & low:
                row ^= p
        if row:
            pivots.append(row)
    return len(pivots)


def _pack(rows: list[int], ncols: int):
    import numpy as np

    words = (ncols + 63) // 64
    out = np.zeros((len(rows), words), dtype=np.uint64)
    mask = (1 << 64) - 1
    for i, row in enumerate(rows):
        for w in range(words):
            out[i, w] = (row >> (64 * w)) & mask
    return out


def rank_pairs(pairs, n_rows: int, n_cols: int, row_index, col_index) -> int:
    """Rank of a sparse 0/1 matrix given as (row, col) pairs."""
    rows = [0] * n_rows
    for r, c in pairs:
        rows[row_index[r]] |= 1 << col_index[c]
    return rank_bitrows(rows, n_cols)
