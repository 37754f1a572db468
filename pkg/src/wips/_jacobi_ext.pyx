# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Cyclic Jacobi eigenvalue iteration (compiled kernel).

Same algorithm and return contract as ``wips._jacobi_py.jacobi_eigh``.
"""

import numpy as np
from libc.math cimport fabs, sqrt


cdef double _off_norm(double[:, ::1] a, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i, j
    for i in range(n - 1):
        for j in range(i + 1, n):
            acc += a[i, j] * a[i, j]
    return sqrt(2.0 * acc)


def jacobi_eigh(a_in, double off_tol, int max_sweeps):
    cdef double[:, ::1] a = np.ascontiguousarray(a_in, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    v_arr = np.eye(n)
    cdef double[:, ::1] v = v_arr
    cdef int sweeps = 0
    cdef double off, thresh, apq, theta, t, c, s, x, y
    cdef Py_ssize_t p, q, k

    with nogil:
        off = _off_norm(a, n)
        while off > off_tol and sweeps < max_sweeps:
            thresh = 0.2 * off / (n * n) if sweeps < 3 else 0.0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if fabs(apq) <= thresh or apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        x = a[k, p]
                        y = a[k, q]
                        a[k, p] = c * x - s * y
                        a[k, q] = s * x + c * y
                    for k in range(n):
                        x = a[p, k]
                        y = a[q, k]
                        a[p, k] = c * x - s * y
                        a[q, k] = s * x + c * y
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for k in range(n):
                        x = v[k, p]
                        y = v[k, q]
                        v[k, p] = c * x - s * y
                        v[k, q] = s * x + c * y
            sweeps += 1
            off = _off_norm(a, n)

    w = np.empty(n)
    for k in range(n):
        w[k] = a[k, k]
    return w, v_arr, sweeps, off
