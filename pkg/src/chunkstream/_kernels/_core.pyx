# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled kernels: chunked-attention mask construction and masked softmax.

Same contracts as _py. Softmax accumulates in double for both dtypes, so
float32 results agree with the numpy backend only to ~1e-6; within one
backend results are deterministic.
"""

import numpy as np

from libc.math cimport exp, INFINITY

ctypedef fused real:
    float
    double


def chunk_mask(Py_ssize_t n_rows, Py_ssize_t n_cols, long chunk, long left,
               long rc, long factor=1, long row_offset=0, long col_offset=0):
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if n_rows < 0 or n_cols < 0:
        raise ValueError("mask dimensions must be non-negative")
    out = np.empty((n_rows, n_cols), dtype=np.uint8)
    cdef unsigned char[:, ::1] m = out
    cdef Py_ssize_t i, j
    cdef long q, key_last, cs, lo, hi
    for i in range(n_rows):
        q = (row_offset + i) * factor
        cs = (q // chunk) * chunk
        hi = cs + chunk + rc
        if left < 0:
            lo = 0
        else:
            lo = cs - left
            if lo < 0:
                lo = 0
        for j in range(n_cols):
            key_last = (col_offset + j + 1) * factor - 1
            m[i, j] = 1 if (key_last >= lo and key_last < hi) else 0
    return out.view(np.bool_)


cdef int _softmax_rows(real[:, :, ::1] s, const unsigned char[:, ::1] m,
                       real[:, :, ::1] out) except -1:
    cdef Py_ssize_t h, i, j
    cdef Py_ssize_t H = s.shape[0], Lq = s.shape[1], Lk = s.shape[2]
    cdef double mx, total, w
    cdef int seen
    for i in range(Lq):
        seen = 0
        for j in range(Lk):
            if m[i, j]:
                seen = 1
                break
        if not seen:
            raise ValueError("attention row with no visible key")
    for h in range(H):
        for i in range(Lq):
            mx = -INFINITY
            for j in range(Lk):
                if m[i, j] and <double> s[h, i, j] > mx:
                    mx = <double> s[h, i, j]
            total = 0.0
            for j in range(Lk):
                if m[i, j]:
                    total += exp(<double> s[h, i, j] - mx)
            for j in range(Lk):
                if m[i, j]:
                    w = exp(<double> s[h, i, j] - mx) / total
                    out[h, i, j] = <real> w
                else:
                    out[h, i, j] = <real> 0.0
    return 0


def masked_softmax(scores, mask):
    arr = np.ascontiguousarray(scores)
    if arr.ndim != 3:
        raise ValueError("scores must be [heads, queries, keys]")
    m = np.ascontiguousarray(mask)
    if m.shape != arr.shape[1:]:
        raise ValueError("mask shape must match scores[1:]")
    if m.dtype == np.bool_:
        m = m.view(np.uint8)
    elif m.dtype != np.uint8:
        m = m.astype(np.uint8)
    out = np.empty_like(arr)
    cdef const unsigned char[:, ::1] mv = m
    cdef float[:, :, ::1] s32
    cdef double[:, :, ::1] s64
    cdef float[:, :, ::1] o32
    cdef double[:, :, ::1] o64
    if arr.dtype == np.float32:
        s32 = arr
        o32 = out
        _softmax_rows(s32, mv, o32)
    elif arr.dtype == np.float64:
        s64 = arr
        o64 = out
        _softmax_rows(s64, mv, o64)
    else:
        raise ValueError("scores dtype must be float32 or float64")
    return out
