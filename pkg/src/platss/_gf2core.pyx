# cython: language_level=3, boundscheck=False, wraparound=False
"""Bit-packed GF(2) Gaussian elimination."""

import numpy as np

cimport numpy as cnp


def rank_packed(cnp.ndarray[cnp.uint64_t, ndim=2] rows, int ncols):
    """Rank over GF(2) of rows packed 64 columns per word."""
    cdef int n = rows.shape[0]
    cdef int words = rows.shape[1]
    cdef int rank = 0
    cdef int col, w, bit, i, j, piv
    cdef unsigned long long mask
    cdef cnp.ndarray[cnp.uint64_t, ndim=2] a = np.ascontiguousarray(rows).copy()
    for col in range(ncols):
        w = col >> 6
        bit = col & 63
        mask = (<unsigned long long> 1) << bit
        piv = -1
        for i in range(rank, n):
            if a[i, w] & mask:
                piv = i
                break
        if piv < 0:
            continue
        if piv != rank:
            for j in range(words):
                a[piv, j], a[rank, j] = a[rank, j], a[piv, j]
        for i in range(n):
            if i != rank and (a[i, w] & mask):
                for j in range(words):
                    a[i, j] ^= a[rank, j]
        rank += 1
        if rank == n:
            break
    return rank
