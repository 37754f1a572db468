"""Negative-sampling maximum-likelihood training with Adam.

The per-batch objective is the Bernoulli log-likelihood restricted to the
sampled pairs and averaged over them: positives are labelled 1, sampled
negatives 0, whatever their observed weight.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from wips.encoder import EncoderParams, backward, forward, init_encoder
from wips.graph import Graph, PairBatch, sample_batch
from wips.numerics import log_sigmoid, make_rng, sigmoid
from wips.similarity import HEAD_KINDS, SimilarityHead

DEFAULT_LR_GRID = (2e-4, 1e-3)
DEFAULT_Q_RATIO_GRID = (0.01, 0.25, 0.5, 0.75, 0.99)

# independent random streams derived from one seed
_STREAM_INIT, _STREAM_LAMBDA, _STREAM_BATCH = 0, 1, 2


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    negatives_per_positive: int = 5
    max_iterations: int = 5000
    eval_interval: int = 100
    seed: int = 0
    hidden: tuple[int, ...] = (64, 64)
    degree_weighted: bool = False
    freeze_lambda: bool = False
    lambda_init: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.max_iterations < 1 or self.eval_interval < 1:
            raise ValueError("batch_size, max_iterations and eval_interval must be >= 1")
        if self.negatives_per_positive < 0:
            raise ValueError("negatives_per_positive must be >= 0")
        self.hidden = tuple(int(h) for h in self.hidden)

    def echo(self) -> dict[str, str]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v) or "-"
            elif v is None:
                v = "-"
            else:
                v = repr(v)
            out[f.name] = v
        return out


@dataclass
class Model:
    encoder: EncoderParams
    head: SimilarityHead

    def embed(self, x) -> np.ndarray:
        return forward(self.encoder, x)[0]

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        named = self.encoder.named()
        if self.head.kind == "wips":
            named.append(("lambda", self.head.lam))
        return named

    def copy(self) -> "Model":
        return Model(self.encoder.copy(), self.head.copy())


def build_model(kind: str, input_dim: int, dim: int, config: TrainConfig, q: int = 0, eps_ball: float = 1e-5) -> Model:
    """Initialize encoder (He-normal) and head; WIPS weights ~ U(0, 1/K)."""
    if kind not in HEAD_KINDS:
        raise ValueError(f"unknown head {kind!r}")
    encoder = init_encoder([input_dim, *config.hidden, dim], make_rng(config.seed, _STREAM_INIT))
    lam = None
    if kind == "wips":
        if config.lambda_init is not None:
            lam = np.array(config.lambda_init, dtype=np.float64)
        else:
            lam = make_rng(config.seed, _STREAM_LAMBDA).uniform(0.0, 1.0 / dim, size=dim)
    return Model(encoder, SimilarityHead(kind, dim, q=q, lam=lam, eps_ball=eps_ball))


@dataclass
class TrainState:
    model: Model
    config: TrainConfig
    rng: np.random.Generator
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0

    def __post_init__(self):
        for name, p in self.model.named_params():
            self.m.setdefault(name, np.zeros_like(p))
            self.v.setdefault(name, np.zeros_like(p))


def batch_loss_and_grads(model: Model, batch: PairBatch, graph: Graph):
    """Mean negative log-likelihood over the batch's pairs and its gradients.

    Returns ``(loss, grads)`` with ``grads`` keyed like
    :meth:`Model.named_params`.
    """
    pairs = np.concatenate([batch.positives, batch.negatives]).reshape(-1, 2)
    n_pos = len(batch.positives)
    if len(pairs) == 0:
        raise ValueError("empty batch")
    nodes, inv = np.unique(pairs.ravel(), return_inverse=True)
    inv = inv.reshape(-1, 2)
    y, trace = forward(model.encoder, graph.feature_rows(nodes))
    ya, yb = y[inv[:, 0]], y[inv[:, 1]]
    h = np.asarray(model.head.score(ya, yb))
    labels = np.zeros(len(pairs))
    labels[:n_pos] = 1.0
    total = len(pairs)
    loss = -(np.sum(log_sigmoid(h[:n_pos])) + np.sum(log_sigmoid(-h[n_pos:]))) / total
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(h))[0]) if not np.all(np.isfinite(h)) else 0
        raise TrainingDivergence(f"non-finite loss; offending pair {tuple(int(t) for t in pairs[bad])}")
    dh = (np.asarray(sigmoid(h)) - labels) / total
    hg = model.head.gradients(ya, yb)
    gy = np.zeros_like(y)
    np.add.at(gy, inv[:, 0], dh[:, None] * hg.d_y)
    np.add.at(gy, inv[:, 1], dh[:, None] * hg.d_y_prime)
    gw, gb, _ = backward(model.encoder, trace, gy)
    grads = {}
    for k in range(len(gw)):
        grads[f"W{k}"] = gw[k]
        grads[f"b{k}"] = gb[k]
    if hg.d_lambda is not None:
        grads["lambda"] = dh @ hg.d_lambda
    return float(loss), grads


def adam_step(state: TrainState, grads: dict[str, np.ndarray], lr: float | None = None) -> TrainState:
    """One bias-corrected Adam update, in place."""
    cfg = state.config
    lr = cfg.learning_rate if lr is None else lr
    state.iteration += 1
    t = state.iteration
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in state.model.named_params():
        if name == "lambda" and cfg.freeze_lambda:
            continue
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
    return state


@dataclass
class ValidationSet:
    """Scored pairs for model selection.

    ``pairs`` index rows of ``features``; ``features=None`` means the
    training graph's own data vectors.
    """

    pairs: np.ndarray
    labels: np.ndarray
    features: np.ndarray | None = None

    def __len__(self):
        return len(self.pairs)


def score_pairs(model: Model, features: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    nodes, inv = np.unique(np.asarray(pairs).ravel(), return_inverse=True)
    inv = inv.reshape(-1, 2)
    y = model.embed(features[nodes])
    return np.asarray(model.head.score(y[inv[:, 0]], y[inv[:, 1]]))


def _validation_auc(model: Model, graph: Graph, val: ValidationSet) -> float:
    from wips.evaluation import roc_auc

    feats = graph.dense_features() if val.features is None else val.features
    return roc_auc(score_pairs(model, feats, val.pairs), val.labels)


@dataclass
class Checkpoint:
    model: Model
    iteration: int
    best_val: float | None
    config: dict[str, str]

    def save(self, fh) -> None:
        fh.write(dumps_checkpoint(self))


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    curve: list[tuple[int, float, float]]
    losses: np.ndarray
    final_model: Model


def train(
    graph: Graph,
    kind: str,
    dim: int,
    config: TrainConfig,
    validation: ValidationSet | None = None,
    q: int = 0,
    eps_ball: float = 1e-5,
) -> TrainResult:
    """Run ``config.max_iterations`` Adam steps on negative-sampled batches.

    Every ``eval_interval`` steps (and at the last step) the curve gets a row
    ``(iteration, mean loss since previous row, validation AUC or nan)``.
    With a non-empty validation set the best-AUC model is checkpointed
    (earliest iteration on ties), otherwise the final one.
    """
    if len(graph.edges) == 0:
        raise ValueError("cannot train on an edgeless graph")
    model = build_model(kind, graph.input_dim, dim, config, q=q, eps_ball=eps_ball)
    state = TrainState(model, config, make_rng(config.seed, _STREAM_BATCH))
    use_val = validation is not None and len(validation) > 0
    losses = np.empty(config.max_iterations)
    curve = []
    best_auc, best_model, best_iter = -math.inf, None, 0
    last_row = 0
    for it in range(config.max_iterations):
        batch = sample_batch(graph, config.batch_size, config.negatives_per_positive, state.rng, config.degree_weighted)
        try:
            loss, grads = batch_loss_and_grads(state.model, batch, graph)
        except TrainingDivergence as exc:
            raise TrainingDivergence(f"iteration {state.iteration}: {exc}") from None
        losses[it] = loss
        adam_step(state, grads)
        done = state.iteration
        if done % config.eval_interval == 0 or done == config.max_iterations:
            auc = _validation_auc(state.model, graph, validation) if use_val else math.nan
            curve.append((done, float(np.mean(losses[last_row:done])), auc))
            last_row = done
            if use_val and auc > best_auc:
                best_auc, best_model, best_iter = auc, state.model.copy(), done
    if best_model is None:
        best_model, best_iter = state.model.copy(), state.iteration
    ckpt = Checkpoint(best_model, best_iter, best_auc if use_val else None, config.echo())
    return TrainResult(ckpt, curve, losses, state.model)


def q_from_ratio(ratio: float, dim: int) -> int:
    """Negative-block size for a q/K ratio, rounded half up into [0, K]."""
    return min(dim, max(0, int(math.floor(ratio * dim + 0.5))))


@dataclass
class GridCell:
    learning_rate: float
    q_ratio: float | None
    q: int
    val_auc: float
    iteration: int


@dataclass
class GridResult:
    best: Checkpoint
    best_result: TrainResult
    cells: list[GridCell]


def _run_cell(args):
    graph, kind, dim, config, validation, q, eps_ball = args
    return train(graph, kind, dim, config, validation, q=q, eps_ball=eps_ball)


def grid_search(
    graph: Graph,
    kind: str,
    dim: int,
    config: TrainConfig,
    validation: ValidationSet,
    lr_grid=DEFAULT_LR_GRID,
    q_ratio_grid=DEFAULT_Q_RATIO_GRID,
    eps_ball: float = 1e-5,
    jobs: int = 1,
) -> GridResult:
    """Train one model per grid cell and keep the best by validation AUC.

    The q/K grid only applies to ``ipds``.  Every cell re-derives its random
    streams from ``config.seed``, so cells differ only in their grid values.
    """
    if validation is None or len(validation) == 0:
        raise ValueError("grid search needs a validation set")
    lrs = list(lr_grid)
    ratios = list(q_ratio_grid) if kind == "ipds" else [None]
    if not lrs or not ratios:
        raise ValueError("grids must be non-empty")
    specs = []
    for lr in lrs:
        for ratio in ratios:
            q = q_from_ratio(ratio, dim) if ratio is not None else 0
            cfg = TrainConfig(**{**asdict(config), "learning_rate": float(lr)})
            specs.append((lr, ratio, q, (graph, kind, dim, cfg, validation, q, eps_ball)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, [s[3] for s in specs]))
    else:
        results = [_run_cell(s[3]) for s in specs]
    cells = [
        GridCell(float(lr), ratio, q, float(r.checkpoint.best_val), r.checkpoint.iteration)
        for (lr, ratio, q, _), r in zip(specs, results)
    ]
    # first cell wins ties
    best_idx = max(range(len(cells)), key=lambda k: (cells[k].val_auc, -k))
    return GridResult(results[best_idx].checkpoint, results[best_idx], cells)


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = "WIPS-CKPT v1"


def _fmt(x: float) -> str:
    return "%.17g" % x


def dumps_checkpoint(ckpt: Checkpoint) -> str:
    model = ckpt.model
    head = model.head
    out = io.StringIO()
    out.write(CKPT_MAGIC + "\n")
    out.write(head.descriptor() + "\n")
    out.write("dims " + " ".join(str(d) for d in model.encoder.layer_dims) + "\n")
    out.write(" ".join(_fmt(x) for x in head.lam) + "\n" if head.kind == "wips" else "-\n")
    for name, p in model.encoder.named():
        shape = ",".join(str(s) for s in p.shape)
        out.write(f"{name} {shape} " + " ".join(_fmt(x) for x in p.ravel()) + "\n")
    out.write(f"iteration {ckpt.iteration}\n")
    out.write("best_val " + ("-" if ckpt.best_val is None else _fmt(ckpt.best_val)) + "\n")
    out.write("config " + " ".join(f"{k}={v}" for k, v in sorted(ckpt.config.items())) + "\n")
    return out.getvalue()


def loads_checkpoint(text: str) -> Checkpoint:
    lines = text.splitlines()
    if not lines or lines[0] != CKPT_MAGIC:
        raise ValueError("not a WIPS checkpoint (bad magic line)")
    desc = lines[1].split()
    kind = desc[0]
    opts = dict(tok.split("=", 1) for tok in desc[1:])
    dims_line = lines[2].split()
    if dims_line[0] != "dims":
        raise ValueError("checkpoint line 3 must start with 'dims'")
    dims = [int(d) for d in dims_line[1:]]
    lam = None if lines[3].strip() == "-" else np.array([float(x) for x in lines[3].split()])
    n_layers = len(dims) - 1
    tensors = {}
    for line in lines[4 : 4 + 2 * n_layers]:
        name, shape, *vals = line.split()
        arr = np.array([float(x) for x in vals])
        tensors[name] = arr.reshape(tuple(int(s) for s in shape.split(",")))
    weights = [tensors[f"W{k}"] for k in range(n_layers)]
    biases = [tensors[f"b{k}"] for k in range(n_layers)]
    encoder = EncoderParams(weights, biases)
    if encoder.layer_dims != dims:
        raise ValueError(f"tensor shapes {encoder.layer_dims} disagree with dims line {dims}")
    head = SimilarityHead(
        kind, dims[-1], q=int(opts.get("q", 0)), lam=lam, eps_ball=float(opts.get("eps", 1e-5))
    )
    meta = {}
    for line in lines[4 + 2 * n_layers :]:
        key, _, rest = line.partition(" ")
        meta[key] = rest
    best = meta.get("best_val", "-")
    config = dict(tok.split("=", 1) for tok in meta.get("config", "").split())
    return Checkpoint(Model(encoder, head), int(meta.get("iteration", 0)), None if best == "-" else float(best), config)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        return loads_checkpoint(fh.read())


def write_curve(curve, fh) -> None:
    fh.write("iteration\tloss\tval_auc\n")
    for it, loss, auc in curve:
        fh.write(f"{it}\t{_fmt(loss)}\t{'nan' if math.isnan(auc) else _fmt(auc)}\n")
