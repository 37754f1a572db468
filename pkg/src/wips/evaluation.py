"""ROC-AUC scoring, the graph evaluation tasks and a softmax classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from wips.graph import Graph, NodeSplit
from wips.similarity import to_hyperbolic
from wips.trainer import Checkpoint, Model, ValidationSet

EXHAUSTIVE_LIMIT = 2000
NEGATIVE_FACTOR = 10


class InductiveError(ValueError):
    """Raised when unseen nodes would need one-hot (identity) features."""


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], len(xs)]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(len(x))
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate of ``P(s+ > s-) + P(s+ = s-) / 2``."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC needs at least one positive and one negative label")
    if np.any(np.isnan(scores)):
        raise ValueError("scores contain NaN")
    ranks = _average_ranks(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _all_pairs(n):
    i, j = np.triu_indices(n, k=1)
    return np.stack([i, j], axis=1)


def reconstruction_pairs(
    graph: Graph, rng: np.random.Generator | None = None, exhaustive: bool | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Positive edges plus all non-edges or 10x sampled non-edges.

    ``exhaustive=None`` picks all pairs when ``n <= 2000``.
    """
    if exhaustive is None:
        exhaustive = graph.n <= EXHAUSTIVE_LIMIT
    if exhaustive:
        pairs = _all_pairs(graph.n)
        adj = graph.adjacency()
        return pairs, adj[pairs[:, 0], pairs[:, 1]].astype(np.int8)
    if rng is None:
        raise ValueError("sampled non-edges need an rng")
    neg = _sample_non_edges(graph, NEGATIVE_FACTOR * len(graph.edges), rng)
    pairs = np.concatenate([graph.edges, neg])
    labels = np.r_[np.ones(len(graph.edges), np.int8), np.zeros(len(neg), np.int8)]
    return pairs, labels


def _sample_non_edges(graph: Graph, count: int, rng, anchors=None) -> np.ndarray:
    edge_set = {(int(i), int(j)) for i, j in graph.edges}
    out = []
    while len(out) < count:
        a = rng.integers(0, graph.n, size=count) if anchors is None else rng.choice(anchors, size=count)
        b = rng.integers(0, graph.n, size=count)
        for i, j in zip(a, b):
            i, j = int(i), int(j)
            if i == j or (min(i, j), max(i, j)) in edge_set:
                continue
            out.append((i, j))
            if len(out) == count:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def embed_all(model: Model, features: np.ndarray) -> np.ndarray:
    return model.embed(features)


def reconstruction_auc(graph: Graph, checkpoint: Checkpoint | Model, rng=None, exhaustive: bool | None = None) -> float:
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    pairs, labels = reconstruction_pairs(graph, rng, exhaustive)
    y = model.embed(graph.dense_features())
    scores = model.head.score(y[pairs[:, 0]], y[pairs[:, 1]])
    return roc_auc(scores, labels)


def heldout_pairs(graph: Graph, nodes, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Candidate pairs ``(u, v)`` with ``u`` in ``nodes`` and ``v`` anywhere.

    Each unordered pair appears once.  Labels come from ``graph``.  When the
    candidate set exceeds the exhaustive limit, positives are kept and 10x as
    many negatives are sampled.
    """
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    inset = np.zeros(graph.n, dtype=bool)
    inset[nodes] = True
    adj = graph.adjacency()
    n_cand = len(nodes) * (graph.n - 1) - len(nodes) * (len(nodes) - 1) // 2
    if n_cand <= EXHAUSTIVE_LIMIT * (EXHAUSTIVE_LIMIT - 1) // 2:
        u = np.repeat(nodes, graph.n)
        v = np.tile(np.arange(graph.n), len(nodes))
        # (u, v) with v held out is kept once, as u < v
        keep = (u != v) & (~inset[v] | (u < v))
        pairs = np.stack([u[keep], v[keep]], axis=1)
        return pairs, adj[pairs[:, 0], pairs[:, 1]].astype(np.int8)
    if rng is None:
        raise ValueError("large candidate sets need an rng for negative sampling")
    e = graph.edges
    pos = e[inset[e[:, 0]] | inset[e[:, 1]]]
    neg = _sample_non_edges(graph, NEGATIVE_FACTOR * len(pos), rng, anchors=nodes)
    pairs = np.concatenate([pos, neg])
    return pairs, np.r_[np.ones(len(pos), np.int8), np.zeros(len(neg), np.int8)]


def heldout_validation(graph: Graph, nodes, rng=None) -> ValidationSet:
    """Validation pairs for nodes outside the training subgraph, scored from data vectors."""
    if graph.onehot:
        raise InductiveError(
            "one-hot features give no data vector for unseen nodes; inductive evaluation is impossible"
        )
    pairs, labels = heldout_pairs(graph, nodes, rng)
    return ValidationSet(pairs, labels, graph.features)


def linkpred_auc(graph: Graph, split: NodeSplit, checkpoint: Checkpoint | Model, part: str = "test", rng=None) -> float:
    """AUC on (held-out node, any node) pairs of the full graph."""
    if graph.onehot:
        raise InductiveError(
            "one-hot features give no data vector for unseen nodes; inductive evaluation is impossible"
        )
    model = checkpoint.model if isinstance(checkpoint, Checkpoint) else checkpoint
    if model.encoder.layer_dims[0] != graph.input_dim:
        raise ValueError(f"checkpoint expects {model.encoder.layer_dims[0]}-dim inputs, graph has {graph.input_dim}")
    nodes = getattr(split, part)
    pairs, labels = heldout_pairs(graph, nodes, rng)
    if labels.sum() == 0:
        raise ValueError(f"{part} nodes have no links; AUC undefined")
    y = model.embed(graph.features)
    return roc_auc(model.head.score(y[pairs[:, 0]], y[pairs[:, 1]]), labels)


def node_features(model: Model, features: np.ndarray, hyperbolic: bool = False) -> np.ndarray:
    """Feature vectors for downstream tasks; Poincare models may use hyperbolic coordinates."""
    y = model.embed(features)
    if hyperbolic:
        if model.head.kind != "poincare":
            raise ValueError("hyperbolic coordinates only apply to the poincare head")
        y = to_hyperbolic(y, model.head.eps_ball)
    return y


@dataclass
class ClassifierModel:
    """Multinomial logistic regression; ``weights`` is ``(classes, p)``."""

    weights: np.ndarray
    bias: np.ndarray
    classes: np.ndarray

    def logits(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.weights.T + self.bias

    def predict_proba(self, x) -> np.ndarray:
        z = self.logits(x)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x) -> np.ndarray:
        # argmax picks the lowest index on ties
        return self.classes[np.argmax(self.logits(x), axis=1)]


def train_classifier(features, labels, l2: float = 1e-4, iters: int = 500) -> ClassifierModel:
    """Full-batch gradient descent on the L2-penalized softmax loss.

    Features are standardized internally and the scaling is folded back
    into the returned weights.  Step size is ``1 / L`` for the loss's
    gradient Lipschitz bound.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(labels):
        raise ValueError("features must be (rows, dims) with one label per row")
    classes, y = np.unique(labels, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("classifier needs at least two classes")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    xs = (x - mean) / std
    m, p = xs.shape
    c = len(classes)
    onehot = np.zeros((m, c))
    onehot[np.arange(m), y] = 1.0
    xb = np.hstack([xs, np.ones((m, 1))])
    lip = 0.5 * np.linalg.norm(xb, 2) ** 2 / m + l2
    step = 1.0 / lip
    theta = np.zeros((c, p + 1))
    for _ in range(iters):
        z = xb @ theta.T
        z -= z.max(axis=1, keepdims=True)
        prob = np.exp(z)
        prob /= prob.sum(axis=1, keepdims=True)
        grad = (prob - onehot).T @ xb / m
        grad[:, :p] += l2 * theta[:, :p]
        theta -= step * grad
    w = theta[:, :p] / std
    b = theta[:, p] - w @ mean
    return ClassifierModel(w, b, classes)


def classify_accuracy(model: ClassifierModel, features, labels) -> float:
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if len(x) == 0:
        raise ValueError("no rows to classify")
    if len(x) != len(labels):
        raise ValueError("features and labels differ in length")
    return float(np.mean(model.predict(x) == labels))


def classification_task(model: Model, features, labels, split: NodeSplit, hyperbolic: bool = False, l2=1e-4, iters=500) -> float:
    """Fit on training-node feature vectors, report test-node accuracy."""
    y = node_features(model, features, hyperbolic)
    labels = np.asarray(labels)
    clf = train_classifier(y[split.train], labels[split.train], l2=l2, iters=iters)
    return classify_accuracy(clf, y[split.test], labels[split.test])


REPORT_COLUMNS = ("task", "head", "K", "seed", "metric", "value")


def write_report(rows, fh) -> None:
    """TSV report, one measurement per row."""
    fh.write("\t".join(REPORT_COLUMNS) + "\n")
    for r in rows:
        v = r["value"]
        val = "nan" if isinstance(v, float) and math.isnan(v) else ("%.17g" % v if isinstance(v, float) else str(v))
        fh.write("\t".join(str(r[c]) for c in REPORT_COLUMNS[:-1]) + "\t" + val + "\n")
