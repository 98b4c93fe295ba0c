"""Delay-tapped feed-forward canceller: bias-free dense layers over delayed
Tx magnitudes, linear output layer, exact backpropagation.

Flat parameter order (used by flatten/unflatten and backward) is layer
major, row major: W_0 first, then W_1, ..., then the output row w_out.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .signal_core import DelaySet, SignalError

ACTIVATIONS = ("tanh", "relu", "sigmoid")


def _act(z, name):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return 1.0 / (1.0 + np.exp(-z))


def _act_grad(z, name):
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 - s)


@dataclass
class NNModel:
    delays: DelaySet
    layer_weights: list  # [W_0 (K0 x M), ..., W_{L-1}, w_out (1 x K_{L-1})]
    activation: str = "tanh"
    input_scale: float = 1.0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise SignalError(f"unknown activation {self.activation!r}")
        if not (self.input_scale > 0):
            raise SignalError("input_scale must be positive")
        if len(self.layer_weights) < 2:
            raise SignalError("need at least one hidden layer and an output layer")
        ws = [np.asarray(w, dtype=np.float64) for w in self.layer_weights]
        if ws[0].shape[1] != len(self.delays):
            raise SignalError(
                f"W_0 input dim {ws[0].shape[1]} != number of delays {len(self.delays)}")
        for a, b in zip(ws, ws[1:]):
            if b.shape[1] != a.shape[0]:
                raise SignalError(f"layer dims do not chain: {a.shape} -> {b.shape}")
        if ws[-1].shape[0] != 1:
            raise SignalError("output layer must have a single row")
        for w in ws:
            if not np.all(np.isfinite(w)):
                raise SignalError("non-finite weight")
        self.layer_weights = ws

    @property
    def widths(self):
        return [w.shape[0] for w in self.layer_weights]

    def param_count(self):
        return sum(w.size for w in self.layer_weights)

    def flatten(self):
        return np.concatenate([w.ravel() for w in self.layer_weights])

    def with_params(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count():
            raise SignalError(f"expected {self.param_count()} parameters, got {flat.size}")
        ws = []
        pos = 0
        for w in self.layer_weights:
            ws.append(flat[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
        return NNModel(self.delays, ws, self.activation, self.input_scale)

    def to_dict(self):
        return {
            "type": "nn",
            "delays": list(self.delays.delays),
            "widths": self.widths,
            "activation": self.activation,
            "input_scale": self.input_scale,
            "weights": [w.tolist() for w in self.layer_weights],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("type") != "nn":
            raise SignalError(f"not an nn model: type={d.get('type')!r}")
        ws = [np.array(w) for w in d["weights"]]
        return cls(DelaySet(tuple(d["delays"])), ws, d["activation"], float(d["input_scale"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_weights(delays: DelaySet, hidden_widths, seed, activation="tanh", input_scale=1.0):
    """Glorot-uniform initialized model; same seed gives identical weights.

    ``hidden_widths`` lists hidden-layer output channels, e.g. (3, 2); the
    1-wide output layer is appended automatically.
    """
    rng = np.random.default_rng(seed)
    dims = [len(delays)] + list(hidden_widths) + [1]
    ws = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
    return NNModel(delays, ws, activation, input_scale)


def forward(model: NNModel, f_n):
    """Scalar network output for one delayed-magnitude vector."""
    a = np.asarray(f_n, dtype=np.float64)
    if a.shape != (len(model.delays),):
        raise SignalError(f"input length {a.shape} != number of delays {len(model.delays)}")
    for w in model.layer_weights[:-1]:
        a = _act(w @ a, model.activation)
    return float(model.layer_weights[-1][0] @ a)


def backward(model: NNModel, f_n, upstream=1.0):
    """upstream * d(output)/d(params), flattened in canonical order."""
    a = np.asarray(f_n, dtype=np.float64)
    acts = [a]
    pres = []
    for w in model.layer_weights[:-1]:
        z = w @ a
        pres.append(z)
        a = _act(z, model.activation)
        acts.append(a)
    grads = [None] * len(model.layer_weights)
    grads[-1] = upstream * acts[-1][None, :]
    delta = upstream * model.layer_weights[-1][0]
    for j in range(len(pres) - 1, -1, -1):
        delta = delta * _act_grad(pres[j], model.activation)
        grads[j] = np.outer(delta, acts[j])
        if j > 0:
            delta = model.layer_weights[j].T @ delta
    return np.concatenate([g.ravel() for g in grads])


def forward_batch(model: NNModel, features):
    return kernels.nn_forward_batch(features, model.layer_weights, model.activation)


def loss_grad_batch(model: NNModel, features, targets):
    """Mean-squared-error loss and flat mean gradient over a batch."""
    loss, grads, y = kernels.nn_loss_grad(features, targets, model.layer_weights, model.activation)
    return loss, np.concatenate([np.asarray(g).ravel() for g in grads]), y
