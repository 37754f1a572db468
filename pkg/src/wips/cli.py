"""``wips`` command line: synth, train, eval and spectral subcommands.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Every run writes a
``manifest.tsv`` with the argv, resolved settings, seeds and SHA-256 hashes
of all files read or written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from wips import evaluation, spectral, synth
from wips.graph import NodeSplit, OneHot, induced_subgraph, load_graph, split_nodes, write_edges, write_features
from wips.numerics import make_rng
from wips.similarity import HEAD_KINDS
from wips.trainer import (
    DEFAULT_LR_GRID,
    DEFAULT_Q_RATIO_GRID,
    TrainConfig,
    ValidationSet,
    grid_search,
    load_checkpoint,
    save_checkpoint,
    train,
    write_curve,
)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# extra random streams beyond the trainer's own (0, 1, 2)
SPLIT_STREAM = 7
VALIDATION_STREAM = 8
EVAL_STREAM = 9

TRAIN_DEFAULTS = {
    "head": None,
    "dim": None,
    "hidden": "64,64",
    "lr": 1e-3,
    "lr_grid": None,
    "q_ratio_grid": None,
    "iters": 5000,
    "eval_interval": 100,
    "batch": 64,
    "negatives": 5,
    "seed": 0,
    "split": None,
    "degree_weighted": False,
    "eps_ball": 1e-5,
    "jobs": 1,
}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _csv_floats(text, name):
    try:
        vals = [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


def _csv_ints(text, name):
    if text in (None, "", "-"):
        return []
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated integers, got {text!r}") from None


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _existing(path, flag):
    if path is None:
        raise UsageError(f"{flag} is required")
    if not Path(path).is_file():
        raise UsageError(f"{flag}: no such file {path}")
    return Path(path)


def write_manifest(out: Path, argv, settings: dict, inputs, outputs) -> Path:
    """Key/value TSV; file rows are ``file<TAB>role<TAB>path<TAB>sha256``."""
    path = out / "manifest.tsv"
    with open(path, "w") as fh:
        fh.write("key\tvalue\n")
        fh.write("argv\t" + json.dumps(list(argv)) + "\n")
        for k in sorted(settings):
            fh.write(f"{k}\t{settings[k]}\n")
        for role, files in (("input", inputs), ("output", outputs)):
            for p in files:
                fh.write(f"file\t{role}\t{p}\t{sha256(p)}\n")
    return path


def _resolve(args, defaults: dict) -> dict:
    """Defaults, overlaid by the ``--config`` JSON file, overlaid by explicit flags."""
    opts = dict(defaults)
    if getattr(args, "config", None):
        cfg_path = _existing(args.config, "--config")
        try:
            data = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config: invalid JSON ({exc})") from None
        for key, val in data.items():
            key = key.replace("-", "_")
            if key not in defaults:
                raise UsageError(f"--config: unknown key {key!r}")
            opts[key] = val
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    return opts


def _load_input_graph(edges, features):
    edge_path = _existing(edges, "--edges")
    feat_path = None
    with open(edge_path) as efh:
        if features in (None, "onehot"):
            g = load_graph(efh)
        else:
            feat_path = _existing(features, "--features")
            with open(feat_path) as ffh:
                g = load_graph(efh, ffh)
    return g, [p for p in (edge_path, feat_path) if p is not None]


def _train_config(opts) -> TrainConfig:
    if opts["dim"] is None or int(opts["dim"]) < 1:
        raise UsageError("--dim must be a positive integer")
    hidden = opts["hidden"]
    hidden = _csv_ints(hidden, "hidden") if isinstance(hidden, str) else [int(h) for h in hidden]
    try:
        return TrainConfig(
            learning_rate=float(opts["lr"]),
            batch_size=int(opts["batch"]),
            negatives_per_positive=int(opts["negatives"]),
            max_iterations=int(opts["iters"]),
            eval_interval=int(opts["eval_interval"]),
            seed=int(opts["seed"]),
            hidden=tuple(hidden),
            degree_weighted=bool(opts["degree_weighted"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _split_ratios(opts):
    if opts["split"] is None:
        return None
    ratios = opts["split"]
    ratios = _csv_floats(ratios, "split") if isinstance(ratios, str) else [float(r) for r in ratios]
    if len(ratios) != 3:
        raise UsageError("--split needs three ratios")
    return tuple(ratios)


def derive_split(g, seed, ratios) -> NodeSplit:
    return split_nodes(g, make_rng(seed, SPLIT_STREAM), ratios)


def write_split(split: NodeSplit, fh) -> None:
    fh.write("node\tpart\n")
    rows = [(int(i), part) for part in ("train", "valid", "test") for i in getattr(split, part)]
    for i, part in sorted(rows):
        fh.write(f"{i}\t{part}\n")


def read_split(fh) -> NodeSplit:
    parts = {"train": [], "valid": [], "test": []}
    for k, line in enumerate(fh, start=1):
        if k == 1 or not line.strip():
            continue
        node, part = line.split()
        parts[part].append(int(node))
    return NodeSplit(*(np.array(sorted(parts[p]), dtype=np.int64) for p in ("train", "valid", "test")))


def _fit(g, opts, config, split=None):
    """Train (or grid-search) per the resolved options.

    Returns ``(result, grid_cells_or_None)``; ``result`` is a TrainResult.
    """
    kind = opts["head"]
    dim = int(opts["dim"])
    if split is not None:
        train_graph = induced_subgraph(g, split.train)
        validation = evaluation.heldout_validation(g, split.valid, make_rng(config.seed, VALIDATION_STREAM))
    else:
        train_graph = g
        pairs, labels = evaluation.reconstruction_pairs(g, make_rng(config.seed, VALIDATION_STREAM))
        validation = ValidationSet(pairs, labels)
    lrs = opts["lr_grid"]
    lrs = None if lrs is None else (_csv_floats(lrs, "lr-grid") if isinstance(lrs, str) else [float(x) for x in lrs])
    ratios = opts["q_ratio_grid"]
    if kind == "ipds":
        if ratios is None:
            ratios = list(DEFAULT_Q_RATIO_GRID)
        elif isinstance(ratios, str):
            ratios = _csv_floats(ratios, "q-ratio-grid")
        if any(not 0 <= r <= 1 for r in ratios):
            raise UsageError("q/K ratios must lie in [0, 1]")
    eps_ball = float(opts["eps_ball"])
    if lrs is None and kind != "ipds":
        return train(train_graph, kind, dim, config, validation, eps_ball=eps_ball), None
    grid = grid_search(
        train_graph,
        kind,
        dim,
        config,
        validation,
        lr_grid=lrs or [config.learning_rate],
        q_ratio_grid=ratios or [0.0],
        eps_ball=eps_ball,
        jobs=int(opts["jobs"]),
    )
    return grid.best_result, grid.cells


def _write_grid(cells, fh):
    fh.write("learning_rate\tq_ratio\tq\tval_auc\titeration\n")
    for c in cells:
        ratio = "-" if c.q_ratio is None else repr(c.q_ratio)
        fh.write(f"{c.learning_rate!r}\t{ratio}\t{c.q}\t{c.val_auc:.17g}\t{c.iteration}\n")


def _settings(opts, config: TrainConfig | None = None) -> dict:
    out = {f"opt.{k}": v for k, v in opts.items()}
    if config is not None:
        out.update({f"config.{k}": v for k, v in config.echo().items()})
        out["seed.init"] = f"philox({config.seed},0)"
        out["seed.lambda"] = f"philox({config.seed},1)"
        out["seed.batches"] = f"philox({config.seed},2)"
    return out


def _out_dir(path) -> Path:
    out = Path(path or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ------------------------------------------------------------------ commands


def cmd_train(args) -> int:
    opts = _resolve(args, TRAIN_DEFAULTS)
    if opts["head"] not in HEAD_KINDS:
        raise UsageError(f"--head must be one of {', '.join(HEAD_KINDS)}")
    config = _train_config(opts)
    ratios = _split_ratios(opts)
    g, inputs = _load_input_graph(args.edges, args.features)
    if args.config:
        inputs.append(Path(args.config))
    out = _out_dir(args.out)
    split = derive_split(g, config.seed, ratios) if ratios else None
    result, cells = _fit(g, opts, config, split)
    outputs = [out / "ckpt.txt", out / "curve.tsv"]
    save_checkpoint(result.checkpoint, outputs[0])
    with open(outputs[1], "w") as fh:
        write_curve(result.curve, fh)
    if cells is not None:
        outputs.append(out / "grid.tsv")
        with open(outputs[-1], "w") as fh:
            _write_grid(cells, fh)
    if split is not None:
        outputs.append(out / "split.tsv")
        with open(outputs[-1], "w") as fh:
            write_split(split, fh)
    settings = _settings(opts, config)
    settings["seed.split"] = f"philox({config.seed},{SPLIT_STREAM})" if split is not None else "-"
    settings["seed.validation"] = f"philox({config.seed},{VALIDATION_STREAM})"
    settings["selected.iteration"] = result.checkpoint.iteration
    settings["selected.val_auc"] = result.checkpoint.best_val
    write_manifest(out, args.argv, settings, inputs, outputs)
    print(f"wrote {out / 'ckpt.txt'} (iteration {result.checkpoint.iteration}, val AUC {result.checkpoint.best_val})")
    return EXIT_OK


def load_labels(fh, n: int) -> np.ndarray:
    """``node label`` per line; every node must be labelled exactly once."""
    labels = [None] * n
    for k, line in enumerate(fh, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"labels line {k}: expected 'node label'")
        i = int(parts[0])
        if not 0 <= i < n:
            raise ValueError(f"labels line {k}: node {i} out of range")
        if labels[i] is not None:
            raise ValueError(f"labels line {k}: node {i} labelled twice")
        labels[i] = parts[1]
    missing = [i for i, lab in enumerate(labels) if lab is None]
    if missing:
        raise ValueError(f"{len(missing)} nodes have no label (first: {missing[0]})")
    return np.array(labels)


def _evaluate(task, g, model, split, labels, seed, hyperbolic):
    rng = make_rng(seed, EVAL_STREAM)
    if task == "reconstruction":
        return "auc", evaluation.reconstruction_auc(g, model, rng)
    if task == "linkpred":
        return "auc", evaluation.linkpred_auc(g, split, model, "test", rng)
    return "accuracy", evaluation.classification_task(model, g.dense_features(), labels, split, hyperbolic)


def cmd_eval(args) -> int:
    opts = _resolve(args, TRAIN_DEFAULTS)
    task = args.task
    g, inputs = _load_input_graph(args.edges, args.features)
    if task == "linkpred" and g.onehot:
        raise evaluation.InductiveError(
            "link prediction on unseen nodes needs data vectors; one-hot features make it impossible"
        )
    labels = None
    if task == "classification":
        lab_path = _existing(args.labels, "--labels")
        inputs.append(lab_path)
        with open(lab_path) as fh:
            labels = load_labels(fh, g.n)
    ratios = _split_ratios(opts) or (0.64, 0.16, 0.20)
    rows = []
    settings = {"task": task}
    if args.ckpt is not None:
        if args.repeats is not None:
            raise UsageError("--ckpt and --repeats are mutually exclusive")
        ckpt_path = _existing(args.ckpt, "--ckpt")
        inputs.append(ckpt_path)
        ckpt = load_checkpoint(ckpt_path)
        model = ckpt.model
        if model.encoder.layer_dims[0] != g.input_dim:
            raise ValueError(
                f"checkpoint expects {model.encoder.layer_dims[0]}-dim data vectors, graph provides {g.input_dim}"
            )
        seed = int(ckpt.config.get("seed", opts["seed"]))
        split = None
        if task != "reconstruction":
            if args.split_file:
                sp = _existing(args.split_file, "--split-file")
                inputs.append(sp)
                with open(sp) as fh:
                    split = read_split(fh)
            else:
                split = derive_split(g, seed, ratios)
        metric, value = _evaluate(task, g, model, split, labels, seed, args.hyperbolic)
        rows.append(dict(task=task, head=model.head.descriptor(), K=model.head.dim, seed=seed, metric=metric, value=value))
        settings.update({"ckpt": ckpt_path, "seed": seed})
    else:
        if opts["head"] not in HEAD_KINDS:
            raise UsageError(f"--head must be one of {', '.join(HEAD_KINDS)} (or pass --ckpt)")
        base = _train_config(opts)
        repeats = 1 if args.repeats is None else int(args.repeats)
        if repeats < 1:
            raise UsageError("--repeats must be >= 1")
        for r in range(repeats):
            seed = base.seed + r
            config = TrainConfig(**{**asdict(base), "seed": seed})
            split = derive_split(g, seed, ratios) if task != "reconstruction" else None
            # link prediction trains on the training subgraph; the others on the whole graph
            fit_split = split if task == "linkpred" else None
            result, _ = _fit(g, opts, config, fit_split)
            model = result.checkpoint.model
            metric, value = _evaluate(task, g, model, split, labels, seed, args.hyperbolic)
            rows.append(dict(task=task, head=model.head.descriptor(), K=model.head.dim, seed=seed, metric=metric, value=value))
        settings.update(_settings(opts, base))
        settings["seeds"] = ",".join(str(base.seed + r) for r in range(repeats))
        if repeats > 1:
            vals = np.array([row["value"] for row in rows])
            head, dim = rows[0]["head"], rows[0]["K"]
            rows.append(dict(task=task, head=head, K=dim, seed="mean", metric=metric, value=float(vals.mean())))
            rows.append(dict(task=task, head=head, K=dim, seed="std", metric=metric, value=float(vals.std(ddof=1))))
    settings["split_ratios"] = ",".join(repr(r) for r in ratios)
    out = _out_dir(args.out)
    report = out / "report.tsv"
    with open(report, "w") as fh:
        evaluation.write_report(rows, fh)
    write_manifest(out, args.argv, settings, inputs, [report])
    for row in rows:
        print(f"{row['task']}\t{row['head']}\tseed={row['seed']}\t{row['metric']}={row['value']:.6f}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        sg = synth.synthesize(
            args.n,
            args.dim,
            neg_dims=args.neg_dims,
            seed=args.seed,
            model=args.model,
            scale=args.scale,
            offset=args.offset,
            onehot=not args.data_vectors,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args.out)
    files = {name: out / name for name in ("edges.txt", "features.txt", "truth.tsv", "latent.tsv")}
    with open(files["edges.txt"], "w") as fh:
        write_edges(sg.graph, fh)
    with open(files["features.txt"], "w") as fh:
        write_features(sg.graph.features if not sg.graph.onehot else OneHot(args.n), fh)
    with open(files["truth.tsv"], "w") as fh:
        synth.write_matrix(sg.truth, fh)
    with open(files["latent.tsv"], "w") as fh:
        synth.write_matrix(sg.latent, fh)
    settings = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    settings["lambda_star"] = ",".join(repr(float(x)) for x in sg.lam)
    settings["edges"] = len(sg.graph.edges)
    settings["oracle_auc"] = repr(synth.oracle_auc(sg))
    write_manifest(out, args.argv, settings, [], list(files.values()))
    print(f"wrote {len(sg.graph.edges)} edges on {args.n} nodes to {out}; oracle AUC {settings['oracle_auc']}")
    return EXIT_OK


# bandwidth below the point cloud's diameter, so the kernel's compact support matters
CLI_KERNEL_PARAMS = {"epanechnikov": {"bw": 0.25}}


def _kernel_from_name(name: str) -> spectral.KernelSpec:
    if name not in spectral.KERNELS:
        raise UsageError(f"unknown kernel {name!r}; choose from {', '.join(spectral.KERNELS)}")
    return spectral.KERNELS[name](**CLI_KERNEL_PARAMS.get(name, {}))


def cmd_spectral(args) -> int:
    names = args.kernel or list(spectral.KERNELS)
    kernels = [_kernel_from_name(k) for k in names]
    ranks = _csv_ints(args.ranks, "ranks")
    if not ranks or min(ranks) < 1:
        raise UsageError("--ranks must list positive integers")
    if args.n < 2 or args.point_dim < 1:
        raise UsageError("--n must be >= 2 and --point-dim >= 1")
    # points inside the unit ball so the Poincare kernel sees no clipping
    points = make_rng(args.seed).uniform(-0.4, 0.4, size=(args.n, args.point_dim)) / math.sqrt(args.point_dim)
    rows = spectral.hierarchy_report([points], kernels, ranks)
    out = _out_dir(args.out)
    path = out / "hierarchy.tsv"
    with open(path, "w") as fh:
        spectral.write_hierarchy(rows, fh)
    settings = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
    write_manifest(out, args.argv, settings, [], [path])
    sys.stdout.write(path.read_text())
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _add_training_flags(p):
    p.add_argument("--edges", help="edge list: 'i j [w]' per line")
    p.add_argument("--features", help="feature file ('n p' + rows) or 'onehot' (default)")
    p.add_argument("--head", choices=HEAD_KINDS)
    p.add_argument("--dim", type=int, help="feature dimension K")
    p.add_argument("--hidden", help="hidden layer widths, e.g. 64,64 ('' or - for a linear encoder)")
    p.add_argument("--lr", type=float, help="learning rate when no --lr-grid is given")
    p.add_argument("--lr-grid", help=f"comma-separated learning rates (grid default {','.join(map(str, DEFAULT_LR_GRID))})")
    p.add_argument("--q-ratio-grid", "--q-grid", dest="q_ratio_grid", help="IPDS q/K ratios (default five-point grid)")
    p.add_argument("--iters", type=int)
    p.add_argument("--eval-interval", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", help="train,valid,test node ratios, e.g. 0.64,0.16,0.20")
    p.add_argument("--degree-weighted", action="store_true", default=None, help="degree-proportional negatives")
    p.add_argument("--eps-ball", type=float, help="Poincare clip margin")
    p.add_argument("--jobs", type=int, help="parallel grid cells")
    p.add_argument("--config", help="JSON file with the same keys as the flags")
    p.add_argument("--out", help="output directory (created if absent)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wips", description="Weighted inner product graph embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model or grid-search one")
    _add_training_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or repeated training runs")
    _add_training_flags(p)
    p.add_argument("--task", choices=("reconstruction", "linkpred", "classification"), required=True)
    p.add_argument("--ckpt")
    p.add_argument("--repeats", type=int)
    p.add_argument("--labels", help="'node label' per line (classification)")
    p.add_argument("--split-file", help="split.tsv written by train --split")
    p.add_argument("--hyperbolic", action="store_true", help="classify in hyperbolic coordinates (poincare)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="sample a graph from a weighted inner product model")
    p.add_argument("--model", choices=synth.SYNTH_MODELS, default="wips")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--dim", type=int, default=4)
    p.add_argument("--neg-dims", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=2.0)
    p.add_argument("--offset", type=float, default=-2.0)
    p.add_argument("--data-vectors", action="store_true", help="use the latent vectors as node features")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("spectral", help="definiteness and constrained-rank residual table")
    p.add_argument("--kernel", action="append", help="kernel name (repeatable; default all)")
    p.add_argument("--ranks", default="1,2,4,8")
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--point-dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_spectral)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wips {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"wips {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
