"""Graph loading, node splits and negative-sampled training batches."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np


class GraphFormatError(ValueError):
    """Malformed edge or feature input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class OneHot:
    """Implicit identity features: node ``i`` has the ``i``-th unit vector."""

    n: int


@dataclass(frozen=True)
class Graph:
    """Undirected weighted graph with per-node data vectors.

    ``edges`` is an ``(m, 2)`` int array in canonical order (``i < j``, sorted,
    no duplicates) and ``weights`` the matching positive link weights.
    ``features`` is either an ``(n, p)`` float array or :class:`OneHot`.
    """

    n: int
    edges: np.ndarray
    weights: np.ndarray
    features: np.ndarray | OneHot

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        e = self.edges
        if e.ndim != 2 or e.shape[1] != 2 or len(self.weights) != len(e):
            raise ValueError("edges must be (m, 2) with one weight per edge")
        if len(e):
            if e.min() < 0 or e.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must satisfy i < j")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("link weights must be finite and non-negative")
        if isinstance(self.features, OneHot):
            if self.features.n != self.n:
                raise ValueError("one-hot size differs from node count")
        elif self.features.shape[0] != self.n:
            raise ValueError(f"feature matrix has {self.features.shape[0]} rows, expected {self.n}")

    @property
    def onehot(self) -> bool:
        return isinstance(self.features, OneHot)

    @property
    def input_dim(self) -> int:
        return self.n if self.onehot else int(self.features.shape[1])

    def feature_rows(self, idx) -> np.ndarray:
        """Dense data vectors for the nodes in ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        if self.onehot:
            out = np.zeros((len(idx), self.n))
            out[np.arange(len(idx)), idx] = 1.0
            return out
        return self.features[idx]

    def dense_features(self) -> np.ndarray:
        return self.feature_rows(np.arange(self.n))

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 link indicator."""
        a = np.zeros((self.n, self.n), dtype=bool)
        a[self.edges[:, 0], self.edges[:, 1]] = True
        a[self.edges[:, 1], self.edges[:, 0]] = True
        return a

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)


def make_graph(n: int, edges: Iterable, features=None) -> Graph:
    """Build a canonical :class:`Graph` from ``(i, j)`` or ``(i, j, w)`` tuples.

    Duplicate or self-loop edges raise ``ValueError``.
    """
    seen: dict[tuple[int, int], float] = {}
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        key = (min(i, j), max(i, j))
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if key in seen:
            raise ValueError(f"duplicate edge {key}")
        seen[key] = w
    return _canonical(n, seen, OneHot(n) if features is None else features)


def _canonical(n, edge_map, features) -> Graph:
    keys = sorted(edge_map)
    edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
    weights = np.array([edge_map[k] for k in keys], dtype=np.float64)
    if not isinstance(features, OneHot):
        features = np.asarray(features, dtype=np.float64)
    return Graph(n=n, edges=edges, weights=weights, features=features)


def load_graph(edge_source: TextIO, feature_source: TextIO | None = None, n: int | None = None) -> Graph:
    """Parse an edge list (``i j [w]`` per line) and an optional feature file.

    Without a feature file the graph gets one-hot features.  The node count is
    ``1 + max id`` unless given explicitly or by the feature header.
    """
    edge_map: dict[tuple[int, int], float] = {}
    origin: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(edge_source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphFormatError(f"expected 'i j [w]', got {line!r}", lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise GraphFormatError(f"cannot parse {line!r}", lineno) from None
        if i < 0 or j < 0:
            raise GraphFormatError(f"negative node id in {line!r}", lineno)
        if not np.isfinite(w) or w < 0:
            raise GraphFormatError(f"link weight must be finite and non-negative, got {parts[2]}", lineno)
        if i == j:
            raise GraphFormatError(f"self-loop at node {i}", lineno)
        key = (min(i, j), max(i, j))
        if key in edge_map:
            raise GraphFormatError(f"duplicate edge {key[0]} {key[1]}", lineno)
        edge_map[key] = w
        origin[key] = lineno

    features: np.ndarray | OneHot | None = None
    if feature_source is not None:
        features = load_features(feature_source)
        fn = features.n if isinstance(features, OneHot) else features.shape[0]
        if n is not None and n != fn:
            raise GraphFormatError(f"feature file describes {fn} nodes, expected {n}", 1)
        n = fn
    max_id = max((j for _, j in edge_map), default=-1)
    if n is None:
        n = max_id + 1
    if max_id >= n:
        bad = min((k for k in edge_map if k[1] >= n), key=origin.__getitem__)
        raise GraphFormatError(f"node id {bad[1]} out of range for n={n}", origin[bad])
    if features is None:
        features = OneHot(n)
    return _canonical(n, edge_map, features)


def load_features(source: TextIO) -> np.ndarray | OneHot:
    """Parse ``n p`` + ``n`` rows of reals, or the single line ``onehot n``."""
    lines = [(k, ln.strip()) for k, ln in enumerate(source, start=1)]
    lines = [(k, ln) for k, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GraphFormatError("empty feature file", 1)
    k0, header = lines[0]
    head = header.split()
    if len(head) == 2 and head[0] == "onehot":
        return OneHot(int(head[1]))
    try:
        n, p = int(head[0]), int(head[1])
        if len(head) != 2:
            raise ValueError
    except (ValueError, IndexError):
        raise GraphFormatError(f"feature header must be 'n p' or 'onehot n', got {header!r}", k0) from None
    rows = lines[1:]
    if len(rows) != n:
        raise GraphFormatError(f"header declares {n} rows, found {len(rows)}", k0)
    out = np.empty((n, p))
    for r, (k, ln) in enumerate(rows):
        vals = ln.split()
        if len(vals) != p:
            raise GraphFormatError(f"expected {p} values, got {len(vals)}", k)
        try:
            out[r] = [float(v) for v in vals]
        except ValueError:
            raise GraphFormatError(f"cannot parse feature row {ln!r}", k) from None
    if not np.all(np.isfinite(out)):
        raise GraphFormatError("non-finite feature value")
    return out


def write_edges(g: Graph, fh: TextIO) -> None:
    for (i, j), w in zip(g.edges, g.weights):
        fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")


def write_features(features: np.ndarray | OneHot, fh: TextIO) -> None:
    if isinstance(features, OneHot):
        fh.write(f"onehot {features.n}\n")
        return
    n, p = features.shape
    fh.write(f"{n} {p}\n")
    for row in features:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True)
class NodeSplit:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray


def split_nodes(g: Graph, rng: np.random.Generator, ratios=(0.64, 0.16, 0.20)) -> NodeSplit:
    """Random train/validation/test node partition.

    Validation and test sizes are ``round(ratio * n)``; train takes the rest.
    Each part is returned sorted.
    """
    if g.n < 5:
        raise ValueError(f"need at least 5 nodes to split, got {g.n}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three non-negative values summing to 1, got {ratios}")
    n_valid = int(round(ratios[1] * g.n))
    n_test = int(round(ratios[2] * g.n))
    n_train = g.n - n_valid - n_test
    if n_train < 1:
        raise ValueError("split leaves no training nodes")
    perm = rng.permutation(g.n)
    return NodeSplit(
        train=np.sort(perm[:n_train]),
        valid=np.sort(perm[n_train:n_train + n_valid]),
        test=np.sort(perm[n_train + n_valid:]),
    )


def induced_subgraph(g: Graph, keep) -> Graph:
    """Subgraph on ``keep``, relabelled densely in increasing id order."""
    keep = np.unique(np.asarray(keep, dtype=np.int64))
    if len(keep) == 0:
        raise ValueError("cannot induce a subgraph on an empty node set")
    if keep[0] < 0 or keep[-1] >= g.n:
        raise ValueError("kept node id out of range")
    relabel = np.full(g.n, -1, dtype=np.int64)
    relabel[keep] = np.arange(len(keep))
    mask = (relabel[g.edges[:, 0]] >= 0) & (relabel[g.edges[:, 1]] >= 0)
    edges = relabel[g.edges[mask]]
    features = OneHot(len(keep)) if g.onehot else g.features[keep]
    return Graph(n=len(keep), edges=edges.reshape(-1, 2), weights=g.weights[mask], features=features)


@dataclass(frozen=True)
class PairBatch:
    """Positive pairs (with observed weights) and their negative samples.

    ``negatives[k * r:(k + 1) * r]`` are the ``r`` negatives drawn for
    ``positives[k]``.
    """

    positives: np.ndarray
    weights: np.ndarray
    negatives: np.ndarray


def sample_batch(
    g: Graph,
    batch_size: int,
    negatives_per_positive: int,
    rng: np.random.Generator,
    degree_weighted: bool = False,
) -> PairBatch:
    """Draw i.i.d. positive edges and negatives by resampling the second endpoint.

    The replacement endpoint is uniform over all nodes other than the anchor,
    or proportional to degree (anchor excluded) when ``degree_weighted``.
    Sampled negatives that happen to be linked are kept.
    """
    m = len(g.edges)
    if m == 0:
        raise ValueError("cannot sample training pairs from an edgeless graph")
    if batch_size < 1 or negatives_per_positive < 0:
        raise ValueError("batch_size must be >= 1 and negatives_per_positive >= 0")
    if g.n < 2:
        raise ValueError("need at least two nodes for negative sampling")
    pick = rng.integers(0, m, size=batch_size)
    pos = g.edges[pick]
    # orient each edge randomly so both endpoints act as anchors
    flip = rng.random(batch_size) < 0.5
    pos = np.where(flip[:, None], pos[:, ::-1], pos)
    anchors = np.repeat(pos[:, 0], negatives_per_positive)
    r = len(anchors)
    if degree_weighted:
        deg = g.degrees().astype(np.float64)
        cdf = np.cumsum(deg)
        others = np.empty(r, dtype=np.int64)
        for k, a in enumerate(anchors):
            total = cdf[-1] - deg[a]
            if total <= 0:
                others[k] = _uniform_other(a, g.n, rng)
                continue
            u = rng.random() * total
            # skip the anchor's own mass
            if u >= cdf[a] - deg[a]:
                u += deg[a]
            others[k] = min(int(np.searchsorted(cdf, u, side="right")), g.n - 1)
    else:
        draw = rng.integers(0, g.n - 1, size=r)
        others = draw + (draw >= anchors)
    negatives = np.stack([anchors, others], axis=1).reshape(-1, 2)
    return PairBatch(positives=pos, weights=g.weights[pick], negatives=negatives)


def _uniform_other(a, n, rng):
    d = int(rng.integers(0, n - 1))
    return d + (d >= a)
