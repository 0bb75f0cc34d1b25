"""Stacked dense networks with hand-written backpropagation.

Parameters are kept as a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of
shape ``(in_dim, out_dim)`` and ``b`` of shape ``(out_dim,)``. A pipeline
stage owns a contiguous slice of that list, so the same routines serve the
whole model and any stage of it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .numcore import as_tensor, elementwise, matmul

ACTIVATIONS = ("relu", "tanh", "none")
LOSSES = ("softmax_xent", "mse")


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"
    kind: str = "dense"

    def __post_init__(self):
        if self.kind != "dense":
            raise InputError(f"unsupported layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise InputError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self):
        return self.in_dim * self.out_dim + self.out_dim


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    loss: str = "softmax_xent"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InputError("a model needs at least one layer")
        if self.loss not in LOSSES:
            raise InputError(f"unknown loss {self.loss!r}")
        for i, (prev, nxt) in enumerate(zip(self.layers, self.layers[1:])):
            if prev.out_dim != nxt.in_dim:
                raise InputError(
                    f"layer {i} outputs {prev.out_dim} features but layer {i + 1} expects {nxt.in_dim}"
                )

    @classmethod
    def mlp(cls, sizes, activation="relu", loss="softmax_xent"):
        """Dense stack through ``sizes``; the output layer has no activation."""
        sizes = list(sizes)
        if len(sizes) < 2:
            raise InputError("mlp needs at least an input and an output size")
        layers = [
            LayerSpec(a, b, activation if i < len(sizes) - 2 else "none")
            for i, (a, b) in enumerate(zip(sizes, sizes[1:]))
        ]
        return cls(tuple(layers), loss)

    @property
    def n_params(self):
        return sum(layer.n_params for layer in self.layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim


@dataclass
class ActivationPack:
    """What a forward pass leaves behind for the matching backward pass."""

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    output: np.ndarray = None

    @property
    def batch(self):
        return self.inputs[0].shape[0]


def init_params(spec, rng):
    """Uniform Glorot init, ``U(-r, r)`` with ``r = sqrt(6 / (in + out))``; zero biases."""
    params = []
    for layer in spec.layers:
        r = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
        params.append(rng.uniform(-r, r, size=(layer.in_dim, layer.out_dim)))
        params.append(np.zeros(layer.out_dim))
    return params


def stage_slice(params, start, stop):
    """Parameters of layers ``start..stop-1`` (a view into the flat list)."""
    return params[2 * start:2 * stop]


def _activate(kind, z):
    if kind == "none":
        return z
    return elementwise(kind, z)


def forward_stage(layers, params, x):
    """Run ``x`` through a contiguous run of layers."""
    if len(params) != 2 * len(layers):
        raise ShapeError(f"{len(layers)} layers need {2 * len(layers)} arrays, got {len(params)}")
    a = as_tensor(x)
    if a.ndim != 2 or a.shape[1] != layers[0].in_dim:
        raise ShapeError(f"stage expects (batch, {layers[0].in_dim}) input, got {a.shape}")
    pack = ActivationPack()
    for i, layer in enumerate(layers):
        w, b = params[2 * i], params[2 * i + 1]
        if w.shape != (layer.in_dim, layer.out_dim) or b.shape != (layer.out_dim,):
            raise ShapeError(f"layer {i} params have shapes {w.shape}, {b.shape}")
        z = matmul(a, w) + b
        pack.inputs.append(a)
        pack.pre.append(z)
        a = _activate(layer.activation, z)
    pack.output = a
    return a, pack


def backward_stage(layers, params, pack, grad_out):
    """Backpropagate ``grad_out`` (d loss / d stage output) through the stage.

    ``params`` may differ from the weights used in the forward pass; the
    cached inputs and pre-activations are always the forward ones. Returns
    ``(grad_in, grads)`` where ``grads`` matches ``params``.
    """
    grad_out = as_tensor(grad_out)
    if pack.output is None or grad_out.shape != pack.output.shape:
        raise ShapeError(
            f"stage backward got gradient of shape {grad_out.shape}, "
            f"expected {None if pack.output is None else pack.output.shape}"
        )
    grads = [None] * len(params)
    delta = grad_out
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.activation != "none":
            delta = elementwise("hadamard", delta, elementwise(layer.activation + "_grad", pack.pre[i]))
        w = params[2 * i]
        grads[2 * i] = matmul(pack.inputs[i].T, delta)
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = matmul(delta, w.T)
    return delta, grads


def _check_targets(loss, y, targets):
    if loss == "softmax_xent":
        t = np.asarray(targets)
        if t.ndim != 1 or t.shape[0] != y.shape[0]:
            raise InputError(f"softmax_xent targets must be a label vector of length {y.shape[0]}")
        if not np.issubdtype(t.dtype, np.integer):
            if not np.all(np.equal(np.mod(t, 1), 0)):
                raise InputError("softmax_xent targets must be integer class labels")
            t = t.astype(np.int64)
        if t.size and (t.min() < 0 or t.max() >= y.shape[1]):
            raise InputError(f"class labels must lie in [0, {y.shape[1]})")
        return t
    t = as_tensor(targets)
    if t.shape != y.shape:
        raise InputError(f"mse targets must have shape {y.shape}, got {t.shape}")
    return t


def loss_from_output(loss, y, targets):
    """Batch-mean loss and its gradient with respect to the network output."""
    t = _check_targets(loss, y, targets)
    n = y.shape[0]
    if loss == "softmax_xent":
        shifted = y - y.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_p = shifted - log_z
        rows = np.arange(n)
        value = float(-log_p[rows, t].mean())
        grad = np.exp(log_p)
        grad[rows, t] -= 1.0
        return value, grad / n
    diff = y - t
    value = float(0.5 * np.sum(diff * diff) / n)
    return value, diff / n


def forward(spec, params, x):
    return forward_stage(spec.layers, params, x)


def loss_and_grad(spec, params, x, targets):
    y, pack = forward(spec, params, x)
    value, dy = loss_from_output(spec.loss, y, targets)
    _, grads = backward_stage(spec.layers, params, pack, dy)
    return value, grads


def evaluate(spec, params, x, targets):
    """Return ``(loss, accuracy)``; accuracy is NaN for regression losses."""
    y, _ = forward(spec, params, x)
    value, _ = loss_from_output(spec.loss, y, targets)
    if spec.loss != "softmax_xent":
        return value, float("nan")
    return value, float(np.mean(np.argmax(y, axis=1) == np.asarray(targets)))
