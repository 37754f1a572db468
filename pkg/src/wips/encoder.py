"""Fully-connected ReLU encoder mapping data vectors to feature vectors.

Weights are stored ``(out, in)`` and inputs are batches of row vectors, so a
layer computes ``Z = X @ W.T + b``.  The output layer is affine with no
activation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class EncoderParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k} expects {w.shape[1]} inputs, previous layer has {self.weights[k - 1].shape[0]}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def named(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"W{k}", w), (f"b{k}", b)]
        return out

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardTrace:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    acts: list[np.ndarray] = field(default_factory=list)


def init_encoder(layer_dims, rng: np.random.Generator) -> EncoderParams:
    """He-normal weights, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"layer dims must be >= 1 with at least input and output, got {dims}")
    weights = [rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)) for fan_in, fan_out in zip(dims, dims[1:])]
    biases = [np.zeros(d) for d in dims[1:]]
    return EncoderParams(weights, biases)


def forward(params: EncoderParams, x) -> tuple[np.ndarray, ForwardTrace]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.layer_dims[0]:
        raise ValueError(f"input width {x.shape[-1] if x.ndim else None} does not match encoder input {params.layer_dims[0]}")
    trace = ForwardTrace(inputs=x)
    a = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        trace.pre.append(z)
        a = z if k == last else np.maximum(z, 0.0)
        trace.acts.append(a)
    return a, trace


def backward(params: EncoderParams, trace: ForwardTrace, grad_out, need_input_grad: bool = False):
    """Reverse-mode gradients of a scalar loss given ``dL/dY``.

    Returns ``(grad_weights, grad_biases, grad_inputs)``; the last is ``None``
    unless ``need_input_grad``.  ReLU has derivative 0 at 0.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != trace.acts[-1].shape:
        raise ValueError(f"gradient shape {g.shape} does not match output {trace.acts[-1].shape}")
    n_layers = len(params.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for k in range(n_layers - 1, -1, -1):
        if k != n_layers - 1:
            g = g * (trace.pre[k] > 0.0)
        a_in = trace.acts[k - 1] if k else trace.inputs
        gw[k] = g.T @ a_in
        gb[k] = g.sum(axis=0)
        if k or need_input_grad:
            g = g @ params.weights[k]
    return gw, gb, (g if need_input_grad else None)
