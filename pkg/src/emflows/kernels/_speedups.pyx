# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the pure-NumPy kernels in ``_philox.py``.

Same Philox4x32-10 stream, same inverse-CDF normal (the Cephes ``ndtri``
reached through scipy's Cython API), same floating-point operation order
in the affine update (the build disables FP contraction), so the two
backends are bit-for-bit interchangeable.
"""

import numpy as np
cimport numpy as cnp
from scipy.special.cython_special cimport ndtri

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    #define PHILOX_M0 0xD2511F53u
    #define PHILOX_M1 0xCD9E8D57u
    #define PHILOX_W0 0x9E3779B9u
    #define PHILOX_W1 0xBB67AE85u

    static inline void philox4x32_10(uint32_t c0, uint32_t c1, uint32_t c2,
                                     uint32_t c3, uint32_t k0, uint32_t k1,
                                     uint32_t out[4])
    {
        int r;
        for (r = 0; r < 10; r++) {
            uint64_t p0 = (uint64_t)PHILOX_M0 * c0;
            uint64_t p1 = (uint64_t)PHILOX_M1 * c2;
            uint32_t hi0 = (uint32_t)(p0 >> 32), lo0 = (uint32_t)p0;
            uint32_t hi1 = (uint32_t)(p1 >> 32), lo1 = (uint32_t)p1;
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            if (r < 9) { k0 += PHILOX_W0; k1 += PHILOX_W1; }
        }
        out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
    }
    """
    void philox4x32_10(unsigned int c0, unsigned int c1, unsigned int c2,
                       unsigned int c3, unsigned int k0, unsigned int k1,
                       unsigned int out[4]) nogil

DEF INV_2_53 = 1.1102230246251565e-16  # 2**-53

BACKEND = "cython"


cdef inline double _u53(unsigned int hi, unsigned int lo) nogil:
    cdef unsigned long long word = ((<unsigned long long> hi) << 32) | lo
    return (<double> (word >> 11) + 0.5) * INV_2_53


cdef void _fill_normals(double[:, ::1] z, unsigned long long seed,
                        unsigned int stream) nogil:
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t d = z.shape[1]
    cdef unsigned int k0 = <unsigned int> (seed & 0xFFFFFFFFULL)
    cdef unsigned int k1 = <unsigned int> (seed >> 32)
    cdef unsigned int out[4]
    cdef Py_ssize_t i, blk
    cdef unsigned int i_lo, i_hi
    for i in range(n):
        i_lo = <unsigned int> ((<unsigned long long> i) & 0xFFFFFFFFULL)
        i_hi = <unsigned int> ((<unsigned long long> i) >> 32)
        for blk in range((d + 1) // 2):
            philox4x32_10(<unsigned int> blk, i_lo, i_hi, stream, k0, k1, out)
            z[i, 2 * blk] = ndtri(_u53(out[0], out[1]))
            if 2 * blk + 1 < d:
                z[i, 2 * blk + 1] = ndtri(_u53(out[2], out[3]))


def standard_normals(seed, stream, Py_ssize_t n, Py_ssize_t d):
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    z = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] zv = z
    _fill_normals(zv, <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF),
                  <unsigned int> (stream & 0xFFFFFFFF))
    return z


def langevin_affine_update(x, drift_mat, drift_vec, double h, seed, stream):
    xa = np.ascontiguousarray(x, dtype=np.float64)
    A = np.ascontiguousarray(drift_mat, dtype=np.float64)
    b = np.ascontiguousarray(drift_vec, dtype=np.float64)
    cdef const double[:, ::1] xv = xa
    cdef const double[:, ::1] Av = A
    cdef const double[::1] bv = b
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t d = xv.shape[1]
    z = standard_normals(seed, stream, n, d)
    cdef double[:, ::1] zv = z
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double s2h = np.sqrt(2.0 * h)
    cdef Py_ssize_t i, r, c
    cdef double acc, t
    with nogil:
        for i in range(n):
            for r in range(d):
                acc = bv[r]
                for c in range(d):
                    acc += Av[r, c] * xv[i, c]
                t = xv[i, r] + h * acc
                ov[i, r] = t + s2h * zv[i, r]
    return out
