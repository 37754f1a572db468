"""Graphs sampled from a known weighted-inner-product link model.

Latent vectors ``y_i ~ N(0, scale^2 I)`` and signed weights ``lam*`` give
the true similarity ``H_ij = <y_i, y_j>_lam* + offset``; each pair
``i < j`` is linked with probability ``sigmoid(H_ij)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wips.graph import Graph, OneHot
from wips.numerics import make_rng, sigmoid

SYNTH_MODELS = ("wips", "ipds", "ips")


@dataclass
class SynthGraph:
    graph: Graph
    latent: np.ndarray
    lam: np.ndarray
    truth: np.ndarray


def signed_weights(dim: int, neg_dims: int) -> np.ndarray:
    if not 0 <= neg_dims <= dim:
        raise ValueError(f"neg_dims must lie in [0, {dim}], got {neg_dims}")
    return np.r_[np.ones(dim - neg_dims), -np.ones(neg_dims)]


def synthesize(
    n: int,
    dim: int,
    neg_dims: int = 0,
    seed: int = 0,
    model: str = "wips",
    scale: float = 1.5,
    offset: float = 0.0,
    lam=None,
    onehot: bool = True,
) -> SynthGraph:
    """Sample a graph; ``features`` are one-hot or the latent vectors themselves."""
    if model not in SYNTH_MODELS:
        raise ValueError(f"unknown synthetic model {model!r}; choose from {', '.join(SYNTH_MODELS)}")
    if n < 2 or dim < 1 or scale <= 0:
        raise ValueError("need n >= 2, dim >= 1 and a positive scale")
    if model == "ips" and neg_dims:
        raise ValueError("the ips model has no negative directions")
    lam = signed_weights(dim, neg_dims) if lam is None else np.asarray(lam, dtype=np.float64)
    if lam.shape != (dim,):
        raise ValueError(f"lambda must have {dim} entries")
    rng = make_rng(seed)
    latent = scale * rng.standard_normal((n, dim))
    truth = (latent * lam) @ latent.T + offset
    truth = np.triu(truth) + np.triu(truth, 1).T
    i, j = np.triu_indices(n, k=1)
    linked = rng.random(len(i)) < sigmoid(truth[i, j])
    edges = np.stack([i[linked], j[linked]], axis=1).astype(np.int64)
    features = OneHot(n) if onehot else latent.copy()
    g = Graph(n=n, edges=edges, weights=np.ones(len(edges)), features=features)
    return SynthGraph(g, latent, lam, truth)


def oracle_auc(sg: SynthGraph) -> float:
    """Reconstruction AUC of the true similarity matrix on the sampled graph."""
    from wips.evaluation import reconstruction_pairs, roc_auc

    pairs, labels = reconstruction_pairs(sg.graph)
    return roc_auc(sg.truth[pairs[:, 0], pairs[:, 1]], labels)


def write_matrix(m: np.ndarray, fh) -> None:
    for row in m:
        fh.write("\t".join("%.17g" % v for v in row) + "\n")


def read_matrix(fh) -> np.ndarray:
    rows = [[float(v) for v in ln.split()] for ln in fh if ln.strip()]
    return np.array(rows)
