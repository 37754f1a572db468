"""Eigen-view of weighted inner products on finite similarity matrices.

A symmetric matrix ``H = U diag(lam) U^T`` is reproduced by the weighted
inner product of the rows of ``U`` with weights ``lam``; truncating to the
``K`` largest ``|lam|`` gives the best signed rank-``K`` fit.  Restricting
the weights' signs gives the IPS (all positive) and one-negative-direction
fits used to compare model classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wips.numerics import eigendecompose_sym, make_rng
from wips.similarity import clip_to_ball

DEFINITENESS_TOL = 1e-9
VERDICTS = ("PD", "CPD_not_PD", "NEG_DEF", "INDEFINITE")


@dataclass
class SpectralFactorization:
    """Weights ``lam`` (by decreasing magnitude) and features ``y`` of shape ``(K, n)``."""

    lam: np.ndarray
    y: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.lam)

    def reconstruct(self) -> np.ndarray:
        return (self.y.T * self.lam) @ self.y


def magnitude_order(w: np.ndarray) -> np.ndarray:
    """Indices sorting by ``|w|`` descending, then larger signed value, then index."""
    idx = np.arange(len(w))
    return np.lexsort((idx, -w, -np.abs(w)))


def wips_factorize(h, rank: int) -> SpectralFactorization:
    h = np.asarray(h, dtype=np.float64)
    n = h.shape[0]
    if not 1 <= rank <= n:
        raise ValueError(f"rank must be in [1, {n}], got {rank}")
    w, u = eigendecompose_sym(h)
    order = magnitude_order(w)[:rank]
    return SpectralFactorization(w[order].copy(), u[:, order].T.copy())


def residual(h, fact: SpectralFactorization) -> float:
    return float(np.linalg.norm(np.asarray(h) - fact.reconstruct()))


@dataclass
class KernelClass:
    verdict: str
    min_eig: float
    max_eig: float
    min_centered_eig: float
    scale: float


def centering_projector(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def classify_kernel(h, tol: float = DEFINITENESS_TOL) -> KernelClass:
    """PD, conditionally PD (not PD), negative definite or indefinite.

    Thresholds are ``-tol * max(1, max |eig|)``; the conditional test uses
    the spectrum of ``P H P`` with ``P`` the centering projector, which is
    the quadratic form restricted to zero-sum coefficient vectors.
    """
    h = np.asarray(h, dtype=np.float64)
    w, _ = eigendecompose_sym(h)
    scale = max(1.0, float(np.max(np.abs(w))) if len(w) else 1.0)
    p = centering_projector(h.shape[0])
    phpw, _ = eigendecompose_sym(p @ h @ p)
    thr = -tol * scale
    lo, hi, clo = float(w.min()), float(w.max()), float(phpw.min())
    if lo >= thr:
        verdict = "PD"
    elif -hi >= thr:
        verdict = "NEG_DEF"
    elif clo >= thr:
        verdict = "CPD_not_PD"
    else:
        verdict = "INDEFINITE"
    return KernelClass(verdict, lo, hi, clo, scale)


@dataclass(frozen=True)
class KernelSpec:
    name: str
    params: tuple = ()

    def label(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}(" + ",".join(f"{k}={v}" for k, v in self.params) + ")"


def gaussian(gamma: float = 1.0) -> KernelSpec:
    return KernelSpec("gaussian", (("gamma", gamma),))


def neg_sq_dist() -> KernelSpec:
    return KernelSpec("neg_sq_dist")


def neg_poincare(eps: float = 1e-5) -> KernelSpec:
    return KernelSpec("neg_poincare", (("eps", eps),))


def epanechnikov(bw: float = 1.0) -> KernelSpec:
    return KernelSpec("epanechnikov", (("bw", bw),))


def random_indefinite(q: int = 2, dim: int = 4, seed: int = 0) -> KernelSpec:
    return KernelSpec("random_indefinite", (("q", q), ("dim", dim), ("seed", seed)))


KERNELS = {
    "gaussian": gaussian,
    "neg_sq_dist": neg_sq_dist,
    "neg_poincare": neg_poincare,
    "epanechnikov": epanechnikov,
    "random_indefinite": random_indefinite,
}


def _sq_dists(x):
    sq = np.sum(x * x, axis=1)
    d = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    np.fill_diagonal(d, 0.0)
    return d


def similarity_matrix(points, kernel: KernelSpec) -> np.ndarray:
    """Kernel Gram matrix over the rows of ``points`` (exactly symmetric).

    ``random_indefinite`` ignores the coordinates and uses only the row count:
    ``H = Y^T diag(1_{dim-q}, -1_q) Y`` for seeded Gaussian ``Y`` of shape
    ``(dim, n)``.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    p = dict(kernel.params)
    if kernel.name == "gaussian":
        h = np.exp(-p["gamma"] * _sq_dists(x))
    elif kernel.name == "neg_sq_dist":
        h = -_sq_dists(x)
    elif kernel.name == "neg_poincare":
        u = clip_to_ball(x, p["eps"])
        sq = np.sum(u * u, axis=1)
        z = 2.0 * _sq_dists(u) / ((1.0 - sq)[:, None] * (1.0 - sq)[None, :])
        h = -np.log1p(z + np.sqrt(z * (z + 2.0)))
    elif kernel.name == "epanechnikov":
        h = np.maximum(0.0, 1.0 - _sq_dists(x) / p["bw"] ** 2)
    elif kernel.name == "random_indefinite":
        q, dim = int(p["q"]), int(p["dim"])
        if not 0 <= q <= dim:
            raise ValueError("random_indefinite needs 0 <= q <= dim")
        y = make_rng(int(p["seed"])).standard_normal((dim, len(x)))
        s = np.r_[np.ones(dim - q), -np.ones(q)]
        h = (y.T * s) @ y
    else:
        raise ValueError(f"unknown kernel {kernel.name!r}; choose from {', '.join(KERNELS)}")
    upper = np.triu(h)
    return upper + np.triu(h, 1).T


def _truncation_residual(h, w, u, keep) -> float:
    keep = np.asarray(keep, dtype=np.int64)
    approx = (u[:, keep] * w[keep]) @ u[:, keep].T
    return float(np.linalg.norm(h - approx))


def constrained_residuals(h, rank: int, w=None, u=None) -> tuple[float, float, float]:
    """Best rank-``rank`` Frobenius residuals with all-positive weights,
    at most one negative weight, and unconstrained signed weights.
    """
    h = np.asarray(h, dtype=np.float64)
    if w is None:
        w, u = eigendecompose_sym(h)
    order = magnitude_order(w)
    pos = [k for k in order if w[k] > 0]
    neg = [k for k in order if w[k] < 0]
    r_ips = _truncation_residual(h, w, u, pos[:rank])
    cands = [pos[:rank]]
    if neg:
        cands.append([neg[0]] + pos[: rank - 1])
    energy = [float(np.sum(w[c] ** 2)) for c in cands]
    r_q1 = _truncation_residual(h, w, u, cands[int(np.argmax(energy))])
    r_wips = _truncation_residual(h, w, u, order[:rank])
    return r_ips, r_q1, r_wips


@dataclass
class HierarchyRow:
    kernel: str
    n: int
    rank: int
    verdict: str
    residual_ips: float
    residual_q1: float
    residual_wips: float


def hierarchy_report(point_sets, kernels, ranks) -> list[HierarchyRow]:
    """Definiteness verdict and constrained-fit residuals per kernel, point set and rank.

    Ranks above the point count are clipped to it (and deduplicated).
    """
    rows = []
    for points in point_sets:
        points = np.asarray(points, dtype=np.float64)
        n = len(points)
        for kernel in kernels:
            h = similarity_matrix(points, kernel)
            verdict = classify_kernel(h).verdict
            w, u = eigendecompose_sym(h)
            for rank in sorted({min(int(r), n) for r in ranks}):
                r_ips, r_q1, r_wips = constrained_residuals(h, rank, w, u)
                rows.append(HierarchyRow(kernel.label(), n, rank, verdict, r_ips, r_q1, r_wips))
    return rows


def write_hierarchy(rows, fh) -> None:
    fh.write("kernel\tn\tK\tverdict\tresidual_ips\tresidual_q1\tresidual_wips\n")
    for r in rows:
        fh.write(
            f"{r.kernel}\t{r.n}\t{r.rank}\t{r.verdict}\t{r.residual_ips:.6e}\t{r.residual_q1:.6e}\t{r.residual_wips:.6e}\n"
        )

