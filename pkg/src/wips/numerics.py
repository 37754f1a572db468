"""Scalar and dense-matrix primitives shared across the package.

Logistic functions are evaluated in overflow-free form, the symmetric
eigensolver is a cyclic Jacobi iteration (compiled when the extension is
built, numpy otherwise), and random streams come from the Philox
counter-based generator so that a seed fixes every draw on every platform.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("WIPS_PURE_PYTHON"):
        raise ImportError("compiled kernel disabled by WIPS_PURE_PYTHON")
    from wips._jacobi_ext import jacobi_eigh as _jacobi_eigh

    BACKEND = "cython"
except ImportError:
    from wips._jacobi_py import jacobi_eigh as _jacobi_eigh

    BACKEND = "python"

MAX_SWEEPS = 100
OFF_DIAGONAL_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class EigenError(ValueError):
    """Raised for invalid eigensolver input or failed convergence."""


def sigmoid(x):
    """Logistic function ``1 / (1 + exp(-x))`` without overflow."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """``log(sigmoid(x))`` computed as ``-softplus(-x)``.

    ``log(1 - sigmoid(x))`` is ``log_sigmoid(-x)``.
    """
    x = np.asarray(x, dtype=np.float64)
    out = -np.logaddexp(0.0, -x)
    return out if out.ndim else float(out)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``seed`` and an optional stream path.

    Distinct ``stream`` tuples give statistically independent generators
    under the same seed, which lets training consume initialization and
    batch randomness from separate streams.
    """
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *stream])))


def eigendecompose_sym(h, tol: float = 1e-10, max_sweeps: int = MAX_SWEEPS):
    """Eigendecomposition ``H = U diag(w) U^T`` of a real symmetric matrix.

    Parameters
    ----------
    h : array_like, shape (n, n)
        Symmetric input; asymmetry above ``1e-12`` relative is rejected.
    tol : float
        Acceptance bound on ``||H U - U diag(w)||_F / max(1, ||H||_F)`` and
        on the orthonormality defect of ``U``.
    max_sweeps : int
        Maximum number of cyclic Jacobi sweeps.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in the order the iteration leaves them (unsorted).
    u : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns.
    """
    h = np.array(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise EigenError(f"eigendecompose_sym needs a square matrix, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise EigenError("matrix contains non-finite entries")
    norm = float(np.linalg.norm(h))
    asym = float(np.linalg.norm(h - h.T))
    if asym > SYMMETRY_TOL * max(norm, 1e-300):
        raise EigenError(f"matrix is not symmetric (||H - H^T||_F = {asym:.3e})")
    n = h.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    a = np.ascontiguousarray(0.5 * (h + h.T))
    w, u, sweeps, off = _jacobi_eigh(a, OFF_DIAGONAL_TOL * norm, max_sweeps)
    residual = float(np.linalg.norm(h @ u - u * w)) / max(1.0, norm)
    ortho = float(np.linalg.norm(u.T @ u - np.eye(n)))
    if off > OFF_DIAGONAL_TOL * norm or residual > tol or ortho > tol:
        raise EigenError(
            f"Jacobi iteration did not converge after {sweeps} sweeps: "
            f"off-diagonal {off:.3e}, residual {residual:.3e}, orthogonality {ortho:.3e}"
        )
    return w, u
