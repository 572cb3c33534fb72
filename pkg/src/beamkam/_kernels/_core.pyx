# distutils: language = c++
# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: sparse convolution and per-offset max reduction.

Hash-accumulate over encoded integer keys instead of materializing the full
(na*nb, k) pair array the numpy fallback builds.  Accumulation runs in the
same flattened (i, j) order as the fallback so sums are bit-identical.
"""

from cython.operator cimport dereference as deref
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline void _axis_bounds(i64[:, ::1] keys, i64* lo, i64* hi):
    cdef Py_ssize_t n = keys.shape[0], k = keys.shape[1], i, a
    cdef i64 v
    for a in range(k):
        lo[a] = keys[0, a]
        hi[a] = keys[0, a]
    for i in range(n):
        for a in range(k):
            v = keys[i, a]
            if v < lo[a]:
                lo[a] = v
            if v > hi[a]:
                hi[a] = v


def convolve(i64[:, ::1] keys_a, cnp.complex128_t[::1] vals_a,
             i64[:, ::1] keys_b, cnp.complex128_t[::1] vals_b, double tol):
    cdef Py_ssize_t na = keys_a.shape[0], nb = keys_b.shape[0]
    cdef Py_ssize_t k = keys_a.shape[1], i, j, a, m
    if na == 0 or nb == 0:
        return np.empty((0, k), dtype=np.int64), np.empty(0, dtype=np.complex128)
    cdef vector[i64] lo_a = vector[i64](k), hi_a = vector[i64](k)
    cdef vector[i64] lo_b = vector[i64](k), hi_b = vector[i64](k)
    _axis_bounds(keys_a, lo_a.data(), hi_a.data())
    _axis_bounds(keys_b, lo_b.data(), hi_b.data())
    cdef vector[i64] lo = vector[i64](k), stride = vector[i64](k)
    cdef i64 span, code
    cdef i64 st = 1
    for a in range(k - 1, -1, -1):
        lo[a] = lo_a[a] + lo_b[a]
        span = (hi_a[a] + hi_b[a]) - lo[a] + 1
        stride[a] = st
        st *= span

    cdef unordered_map[i64, Py_ssize_t] slot
    cdef vector[double] re, im
    cdef vector[i64] codes
    cdef double vr, vi, ar, ai, br, bi
    cdef Py_ssize_t idx
    cdef unordered_map[i64, Py_ssize_t].iterator it
    slot.reserve(na * 4)
    for i in range(na):
        ar = vals_a[i].real
        ai = vals_a[i].imag
        for j in range(nb):
            code = 0
            for a in range(k):
                code += (keys_a[i, a] + keys_b[j, a] - lo[a]) * stride[a]
            br = vals_b[j].real
            bi = vals_b[j].imag
            vr = ar * br - ai * bi
            vi = ar * bi + ai * br
            it = slot.find(code)
            if it == slot.end():
                idx = codes.size()
                slot[code] = idx
                codes.push_back(code)
                re.push_back(vr)
                im.push_back(vi)
            else:
                idx = deref(it).second
                re[idx] += vr
                im[idx] += vi

    m = codes.size()
    out_keys = np.empty((m, k), dtype=np.int64)
    out_vals = np.empty(m, dtype=np.complex128)
    cdef i64[:, ::1] ok = out_keys
    cdef cnp.complex128_t[::1] ov = out_vals
    cdef i64 c
    for i in range(m):
        c = codes[i]
        for a in range(k):
            ok[i, a] = c // stride[a] + lo[a]
            c = c % stride[a]
        ov[i] = re[i] + 1j * im[i]
    mask = np.abs(out_vals) > tol
    out_keys = out_keys[mask]
    out_vals = out_vals[mask]
    order = np.lexsort(out_keys.T[::-1])
    return np.ascontiguousarray(out_keys[order]), out_vals[order]


def offset_reduce_max(i64[:, ::1] row_keys, i64[:, ::1] col_keys,
                      double[::1] mags):
    cdef Py_ssize_t n = row_keys.shape[0], k = row_keys.shape[1], i, a, m
    if n == 0:
        return np.empty((0, k), dtype=np.int64), np.empty(0, dtype=np.float64)
    off = np.empty((n, k), dtype=np.int64)
    cdef i64[:, ::1] offv = off
    for i in range(n):
        for a in range(k):
            offv[i, a] = row_keys[i, a] - col_keys[i, a]
    cdef vector[i64] lo = vector[i64](k), hi = vector[i64](k), stride = vector[i64](k)
    _axis_bounds(offv, lo.data(), hi.data())
    cdef i64 st = 1, code
    for a in range(k - 1, -1, -1):
        stride[a] = st
        st *= hi[a] - lo[a] + 1

    cdef unordered_map[i64, Py_ssize_t] slot
    cdef vector[i64] codes
    cdef vector[double] sups
    cdef Py_ssize_t idx
    cdef unordered_map[i64, Py_ssize_t].iterator it
    for i in range(n):
        code = 0
        for a in range(k):
            code += (offv[i, a] - lo[a]) * stride[a]
        it = slot.find(code)
        if it == slot.end():
            slot[code] = codes.size()
            codes.push_back(code)
            sups.push_back(mags[i])
        else:
            idx = deref(it).second
            if mags[i] > sups[idx]:
                sups[idx] = mags[i]

    m = codes.size()
    out_off = np.empty((m, k), dtype=np.int64)
    out_sup = np.empty(m, dtype=np.float64)
    cdef i64[:, ::1] oo = out_off
    cdef double[::1] os_ = out_sup
    cdef i64 c
    for i in range(m):
        c = codes[i]
        for a in range(k):
            oo[i, a] = c // stride[a] + lo[a]
            c = c % stride[a]
        os_[i] = sups[i]
    order = np.lexsort(out_off.T[::-1])
    return np.ascontiguousarray(out_off[order]), out_sup[order]
