# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see fallback.py for semantics)."""

import numpy as np

from vadet.errors import InvalidInputError

cimport numpy as cnp

cnp.import_array()


def correlate_center(x, taps):
    """Zero-extended centered correlation; matches fallback.correlate_center."""
    taps = np.asarray(taps)
    if taps.shape[0] % 2 != 1:
        raise InvalidInputError("taps must have odd length")
    if np.iscomplexobj(taps):
        return _correlate_cplx(
            np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(taps, dtype=np.complex128),
        )
    return _correlate_real(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(taps, dtype=np.float64),
    )


cdef _correlate_real(double[::1] x, double[::1] t):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t L = m // 2
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b, i, i0, i1
    cdef double acc
    with nogil:
        for b in range(n):
            i0 = L - b
            if i0 < 0:
                i0 = 0
            i1 = n - b + L
            if i1 > m:
                i1 = m
            acc = 0.0
            for i in range(i0, i1):
                acc += x[b + i - L] * t[i]
            out[b] = acc
    return out_arr


cdef _correlate_cplx(double[::1] x, double complex[::1] t):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t L = m // 2
    out_arr = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t b, i, i0, i1
    cdef double complex acc
    with nogil:
        for b in range(n):
            i0 = L - b
            if i0 < 0:
                i0 = 0
            i1 = n - b + L
            if i1 > m:
                i1 = m
            acc = 0.0
            for i in range(i0, i1):
                acc += x[b + i - L] * t[i]
            out[b] = acc
    return out_arr


def local_maxima(x):
    """Strict local maxima with plateau midpoints; matches fallback.local_maxima."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    if n < 3:
        return np.empty(0, dtype=np.intp)
    out_arr = np.empty(n // 2, dtype=np.intp)
    cdef Py_ssize_t[::1] out = out_arr
    cdef Py_ssize_t count = 0
    cdef Py_ssize_t i = 1, ahead
    with nogil:
        while i < n - 1:
            if xv[i - 1] < xv[i]:
                ahead = i + 1
                while ahead < n - 1 and xv[ahead] == xv[i]:
                    ahead += 1
                if xv[ahead] < xv[i]:
                    out[count] = (i + ahead - 1) // 2
                    count += 1
                    i = ahead
                    continue
                i = ahead
            else:
                i += 1
    return out_arr[:count].copy()


def prominences(x, peaks):
    """Topographic prominences; matches fallback.prominences."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t[::1] pv = np.ascontiguousarray(peaks, dtype=np.intp)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t k = pv.shape[0]
    out_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j, i, p
    cdef double h, left_min, right_min, base
    with nogil:
        for j in range(k):
            p = pv[j]
            h = xv[p]
            left_min = h
            i = p - 1
            while i >= 0 and xv[i] <= h:
                if xv[i] < left_min:
                    left_min = xv[i]
                i -= 1
            right_min = h
            i = p + 1
            while i < n and xv[i] <= h:
                if xv[i] < right_min:
                    right_min = xv[i]
                i += 1
            base = left_min if left_min > right_min else right_min
            out[j] = h - base
    return out_arr


def select_by_distance(peaks, heights, min_distance, trace_length):
    """Distance suppression by descending height; matches fallback.select_by_distance."""
    peaks = np.ascontiguousarray(peaks, dtype=np.intp)
    heights = np.ascontiguousarray(heights, dtype=np.float64)
    if peaks.shape[0] == 0:
        return peaks
    order = np.lexsort((peaks, -heights)).astype(np.intp)
    cdef Py_ssize_t[::1] pv = peaks
    cdef Py_ssize_t[::1] ov = order
    cdef Py_ssize_t n = trace_length
    cdef Py_ssize_t d = min_distance
    banned_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] banned = banned_arr
    out_arr = np.empty(pv.shape[0], dtype=np.intp)
    cdef Py_ssize_t[::1] out = out_arr
    cdef Py_ssize_t count = 0
    cdef Py_ssize_t j, p, lo, hi, q
    with nogil:
        for j in range(ov.shape[0]):
            p = pv[ov[j]]
            if banned[p]:
                continue
            out[count] = p
            count += 1
            lo = p - d + 1
            if lo < 0:
                lo = 0
            hi = p + d
            if hi > n:
                hi = n
            for q in range(lo, hi):
                banned[q] = 1
    result = out_arr[:count].copy()
    result.sort()
    return result
