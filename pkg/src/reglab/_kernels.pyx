# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ball-sum suprema; mirrors ``reglab.maximal_ops._ball_sup_python`` operation for operation."""

from libc.stdlib cimport calloc, free


def ball_sup(const long[:, ::1] support, const double[::1] values,
             const long[:, ::1] centers, const long[::1] lookup,
             const double[::1] weight, const double[::1] count,
             const double[::1] suffix, long k_lo, long k_hi, double total,
             double[::1] out):
    """For every center: max over shells k in [k_lo, k_hi) of
    weight[k] * (S_k / count[k]), where S_k accumulates shell sums in order and
    each shell sum accumulates support cells in the given (row-major) order."""
    cdef Py_ssize_t m = support.shape[0]
    cdef Py_ssize_t ndim = support.shape[1]
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t K = weight.shape[0]
    cdef Py_ssize_t c, s, d, k
    cdef long diff, d2, kmax
    cdef double S, best, v, margin = 1.0 + 1e-9
    cdef double *buf
    cdef long *shell_of
    with nogil:
        buf = <double *> calloc(K, sizeof(double))
        shell_of = <long *> calloc(m if m > 0 else 1, sizeof(long))
        for c in range(nc):
            kmax = 0
            for s in range(m):
                d2 = 0
                for d in range(ndim):
                    diff = support[s, d] - centers[c, d]
                    d2 = d2 + diff * diff
                k = lookup[d2]
                shell_of[s] = k
                buf[k] = buf[k] + values[s]
                if k > kmax:
                    kmax = k
            S = 0.0
            best = 0.0
            for k in range(k_hi):
                S = S + buf[k]
                if k >= k_lo:
                    v = weight[k] * (S / count[k])
                    if v > best:
                        best = v
                if k + 1 < k_hi and total * suffix[k + 1] * margin < best:
                    break
            out[c] = best
            for s in range(m):
                buf[shell_of[s]] = 0.0
        free(buf)
        free(shell_of)
