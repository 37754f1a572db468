"""Cyclic Jacobi eigenvalue iteration, numpy fallback for ``_jacobi_ext``."""

import math

import numpy as np


def jacobi_eigh(a, off_tol, max_sweeps):
    """Diagonalize the symmetric matrix ``a`` in place by Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors, sweeps, off)`` where ``off`` is the
    Frobenius norm of the strictly off-diagonal part at exit.  The caller
    decides what to do when ``off > off_tol`` after ``max_sweeps``.
    """
    n = a.shape[0]
    v = np.eye(n)
    sweeps = 0
    off = _off_norm(a)
    while off > off_tol and sweeps < max_sweeps:
        # threshold sweeps: skip small rotations early on
        thresh = 0.2 * off / (n * n) if sweeps < 3 else 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= thresh or apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
        off = _off_norm(a)
    return np.diag(a).copy(), v, sweeps, off


def _off_norm(a):
    upper = np.triu(a, 1)
    return math.sqrt(2.0) * float(np.linalg.norm(upper))
