# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel for the weighted jump part of a generator.

Accumulates, for column-stacked superoperator indices,

    out[i + d*j, k + d*l] += w(omega[k, l] - omega[i, j]) * conj(lg[j, l]) * lg[i, k]

without forming the d^4 Kronecker product or weight matrix.
"""

from libc.math cimport exp, fabs


cdef inline double _weight(double delta, int mode, double param) nogil:
    if mode == 0:
        return 1.0
    if mode == 1:
        return exp(-delta * delta * param)
    return 1.0 if fabs(delta) <= param else 0.0


def weighted_kron_accumulate(double complex[:, ::1] out, double complex[:, ::1] lg,
                             double[:, ::1] omega, int mode, double param):
    """mode 0: weight 1; mode 1: exp(-delta^2 * param); mode 2: |delta| <= param."""
    cdef Py_ssize_t d = lg.shape[0]
    cdef Py_ssize_t i, j, k, l, row, col
    cdef double complex cjl, lik
    cdef double oij, w
    with nogil:
        for j in range(d):
            for i in range(d):
                row = i + d * j
                oij = omega[i, j]
                for l in range(d):
                    cjl = lg[j, l].conjugate()
                    if cjl == 0:
                        continue
                    for k in range(d):
                        lik = lg[i, k]
                        if lik == 0:
                            continue
                        w = _weight(omega[k, l] - oij, mode, param)
                        if w != 0.0:
                            col = k + d * l
                            out[row, col] = out[row, col] + w * cjl * lik
