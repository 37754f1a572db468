"""Similarity heads g(y, y') on feature vectors.

Every function reduces over the last axis, so it accepts a single pair of
vectors or two equally shaped ``(B, K)`` batches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEAD_KINDS = ("ips", "sips", "ipds", "wips", "poincare")
DEFAULT_EPS_BALL = 1e-5


def _pair(y, y2):
    y = np.asarray(y, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    if y.shape != y2.shape:
        raise ValueError(f"feature vectors differ in shape: {y.shape} vs {y2.shape}")
    return y, y2


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def sim_ips(y, y2):
    y, y2 = _pair(y, y2)
    return _out(np.sum(y * y2, axis=-1))


def sim_sips(yt, u, yt2, u2):
    """Shifted inner product ``<yt, yt2> + u + u2``."""
    yt, yt2 = _pair(yt, yt2)
    return _out(np.sum(yt * yt2, axis=-1) + (np.asarray(u) + np.asarray(u2)))


def ipds_signs(k: int, q: int) -> np.ndarray:
    """``(1_{K-q}, -1_q)``."""
    if not 0 <= q <= k:
        raise ValueError(f"IPDS needs 0 <= q <= K, got q={q}, K={k}")
    return np.concatenate([np.ones(k - q), -np.ones(q)])


def sim_ipds(y, y2, q: int):
    y, y2 = _pair(y, y2)
    # same arithmetic as sim_wips with signed unit weights, so the two agree bitwise
    return _out(np.sum(ipds_signs(y.shape[-1], q) * (y * y2), axis=-1))


def sim_wips(y, y2, lam):
    """Weighted inner product ``sum_k lam_k y_k y2_k``; weights may be negative."""
    y, y2 = _pair(y, y2)
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != y.shape[-1:]:
        raise ValueError(f"weight vector has length {lam.shape}, features have {y.shape[-1]}")
    return _out(np.sum(lam * (y * y2), axis=-1))


def clip_to_ball(y, eps_ball: float = DEFAULT_EPS_BALL):
    """Radially project onto the closed ball of radius ``1 - eps_ball``."""
    y = np.asarray(y, dtype=np.float64)
    r = 1.0 - eps_ball
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    scale = np.where(norm >= r, r / np.where(norm > 0, norm, 1.0), 1.0)
    return y * scale


def _poincare_terms(u, v):
    alpha = 1.0 - np.sum(u * u, axis=-1)
    beta = 1.0 - np.sum(v * v, axis=-1)
    delta = np.sum((u - v) ** 2, axis=-1)
    x = 2.0 * delta / (alpha * beta)
    return alpha, beta, delta, x


def sim_neg_poincare(y, y2, eps_ball: float = DEFAULT_EPS_BALL):
    """Negative Poincare-ball distance after clipping both points into the ball."""
    y, y2 = _pair(y, y2)
    u, v = clip_to_ball(y, eps_ball), clip_to_ball(y2, eps_ball)
    _, _, _, x = _poincare_terms(u, v)
    # arcosh(1 + x) without cancellation near x = 0
    return _out(-np.log1p(x + np.sqrt(x * (x + 2.0))))


def to_hyperbolic(y, eps_ball: float = DEFAULT_EPS_BALL):
    """Map ball coordinates to ``2 y / (1 - |y|^2)`` (after clipping)."""
    u = clip_to_ball(y, eps_ball)
    return u * (2.0 / (1.0 - np.sum(u * u, axis=-1, keepdims=True)))


def sips_as_ipds_embedding(yt, u):
    """Lift a SIPS feature ``(yt, u)`` to ``(yt, u, 1, u - 1)`` scored by IPDS with ``q = 1``."""
    yt = np.asarray(yt, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return np.concatenate([yt, u[..., None], np.ones_like(u)[..., None], (u - 1.0)[..., None]], axis=-1)


def wips_as_ipds(y, lam):
    """Absorb ``|lam|`` into the features: returns ``(y_hat, q)`` with
    ``sim_ipds(y_hat, y_hat', q) == sim_wips(y, y', lam)``.

    Positive-weight coordinates come first, negative ones last, each block
    keeping its original order.  Zero weights are not allowed.
    """
    y = np.asarray(y, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam == 0):
        raise ValueError("zero weights cannot be absorbed into an IPDS embedding")
    order = np.concatenate([np.flatnonzero(lam > 0), np.flatnonzero(lam < 0)])
    return (np.sqrt(np.abs(lam)) * y)[..., order], int(np.sum(lam < 0))


@dataclass
class HeadGradients:
    d_y: np.ndarray
    d_y_prime: np.ndarray
    d_lambda: np.ndarray | None = None


@dataclass
class SimilarityHead:
    """One of the five similarity models with its parameters.

    ``lam`` is the trainable weight vector for ``wips`` (``None`` otherwise);
    ``q`` is only meaningful for ``ipds`` and ``eps_ball`` for ``poincare``.
    """

    kind: str
    dim: int
    q: int = 0
    lam: np.ndarray | None = None
    eps_ball: float = DEFAULT_EPS_BALL

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ValueError(f"unknown head {self.kind!r}; choose from {', '.join(HEAD_KINDS)}")
        if self.dim < 1:
            raise ValueError("feature dimension must be >= 1")
        if self.kind == "ipds" and not 0 <= self.q <= self.dim:
            raise ValueError(f"IPDS needs 0 <= q <= K, got q={self.q}, K={self.dim}")
        if self.kind == "wips":
            if self.lam is None:
                self.lam = np.ones(self.dim)
            self.lam = np.asarray(self.lam, dtype=np.float64)
            if self.lam.shape != (self.dim,) or not np.all(np.isfinite(self.lam)):
                raise ValueError("WIPS weights must be a finite vector of length K")
        if self.kind == "poincare" and not 0 < self.eps_ball <= 0.01:
            raise ValueError(f"eps_ball must lie in (0, 0.01], got {self.eps_ball}")

    def descriptor(self) -> str:
        if self.kind == "ipds":
            return f"ipds q={self.q}"
        if self.kind == "poincare":
            return f"poincare eps={self.eps_ball!r}"
        return self.kind

    def copy(self) -> "SimilarityHead":
        lam = None if self.lam is None else self.lam.copy()
        return SimilarityHead(self.kind, self.dim, self.q, lam, self.eps_ball)

    def _check(self, y, y2):
        y, y2 = _pair(y, y2)
        if y.shape[-1] != self.dim:
            raise ValueError(f"features have dimension {y.shape[-1]}, head expects {self.dim}")
        return y, y2

    def score(self, y, y2):
        y, y2 = self._check(y, y2)
        if self.kind == "ips":
            return sim_ips(y, y2)
        if self.kind == "sips":
            return sim_sips(y[..., :-1], y[..., -1], y2[..., :-1], y2[..., -1])
        if self.kind == "ipds":
            return sim_ipds(y, y2, self.q)
        if self.kind == "wips":
            return sim_wips(y, y2, self.lam)
        return sim_neg_poincare(y, y2, self.eps_ball)

    def score_matrix(self, y) -> np.ndarray:
        """All-pairs similarity for the rows of ``y`` (shape ``(n, K)``), exactly symmetric."""
        m = self._raw_matrix(np.asarray(y, dtype=np.float64))
        return np.triu(m) + np.triu(m, 1).T

    def _raw_matrix(self, y):
        if self.kind == "ips":
            return y @ y.T
        if self.kind == "sips":
            u = y[:, -1]
            return y[:, :-1] @ y[:, :-1].T + u[:, None] + u[None, :]
        if self.kind == "ipds":
            return (y * ipds_signs(self.dim, self.q)) @ y.T
        if self.kind == "wips":
            return (y * self.lam) @ y.T
        u = clip_to_ball(y, self.eps_ball)
        sq = np.sum(u * u, axis=1)
        dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (u @ u.T), 0.0)
        np.fill_diagonal(dist2, 0.0)
        x = 2.0 * dist2 / ((1.0 - sq)[:, None] * (1.0 - sq)[None, :])
        return -np.log1p(x + np.sqrt(x * (x + 2.0)))

    def gradients(self, y, y2) -> HeadGradients:
        """Exact partial derivatives of :meth:`score` (batched over leading axes).

        ``d_lambda`` is per pair (same leading shape as the inputs); callers
        sum it with their own weights.
        """
        y, y2 = self._check(y, y2)
        if self.kind == "ips":
            return HeadGradients(y2.copy(), y.copy())
        if self.kind == "sips":
            gy, gy2 = y2.copy(), y.copy()
            gy[..., -1] = 1.0
            gy2[..., -1] = 1.0
            return HeadGradients(gy, gy2)
        if self.kind == "ipds":
            s = ipds_signs(self.dim, self.q)
            return HeadGradients(s * y2, s * y)
        if self.kind == "wips":
            return HeadGradients(self.lam * y2, self.lam * y, y * y2)
        return HeadGradients(*_poincare_grads(y, y2, self.eps_ball))


def _poincare_grads(y, y2, eps_ball):
    u, v = clip_to_ball(y, eps_ball), clip_to_ball(y2, eps_ball)
    alpha, beta, delta, x = _poincare_terms(u, v)
    root = np.sqrt(x * (x + 2.0))
    safe = np.where(root > 0, root, 1.0)
    # d(-arcosh(1 + x))/dx, zero where the points coincide
    coef = np.where(root > 0, -1.0 / safe, 0.0)[..., None]
    a, b, d = alpha[..., None], beta[..., None], delta[..., None]
    gu = coef * (4.0 * (u - v) / (a * b) + 4.0 * d * u / (a * a * b))
    gv = coef * (4.0 * (v - u) / (a * b) + 4.0 * d * v / (a * b * b))
    return _through_clip(y, gu, eps_ball), _through_clip(y2, gv, eps_ball)


def _through_clip(y, g, eps_ball):
    r = 1.0 - eps_ball
    norm = np.linalg.norm(y, axis=-1, keepdims=True)
    clipped = norm >= r
    safe = np.where(norm > 0, norm, 1.0)
    yhat = y / safe
    tangential = g - np.sum(g * yhat, axis=-1, keepdims=True) * yhat
    return np.where(clipped, (r / safe) * tangential, g)


def head_gradients(head: SimilarityHead, y, y2) -> HeadGradients:
    return head.gradients(y, y2)
