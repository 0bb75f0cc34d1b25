"""Momentum SGD with an exponentially smoothed gradient, and weight prediction.

The smoothed gradient follows ``v' = gamma * v + (1 - gamma) * g``. Two update
rules share that state:

* ``"sgd"``: ``W' = W - eta * g`` (the smoothed gradient is still tracked, as
  weight prediction needs it);
* ``"momentum"``: ``W' = W - eta * v'``.

A weight prediction ``s`` updates ahead is ``W - s * eta * v``: the smoothed
gradient stands in for each of the ``s`` gradients not yet computed.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, ShapeError

UPDATE_RULES = ("momentum", "sgd")
DEFAULT_GAMMA = 0.9


@dataclass(frozen=True)
class OptimState:
    eta: float
    gamma: float
    v: tuple

    def __post_init__(self):
        if not self.eta >= 0.0:
            raise InputError(f"learning rate must be non-negative, got {self.eta}")
        if not 0.0 < self.gamma <= 1.0:
            raise InputError(f"gamma must lie in (0, 1], got {self.gamma}")
        object.__setattr__(self, "v", tuple(self.v))

    @classmethod
    def zeros_like(cls, params, eta, gamma=DEFAULT_GAMMA):
        return cls(eta, gamma, tuple(np.zeros_like(p) for p in params))


@dataclass(frozen=True)
class PredictionContext:
    k: int
    n: int
    direction: str

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k < self.n:
            raise InputError(f"need 0 <= k < N with N >= 1, got k={self.k}, N={self.n}")
        if self.direction not in ("forward", "backward"):
            raise InputError(f"direction must be 'forward' or 'backward', got {self.direction!r}")


def _check(a, b, what):
    if len(a) != len(b):
        raise ShapeError(f"{what}: {len(a)} arrays vs {len(b)}")
    for x, y in zip(a, b):
        if x.shape != y.shape:
            raise ShapeError(f"{what}: shapes differ, {x.shape} vs {y.shape}")


def update_smoothed(state, grads):
    _check(state.v, grads, "update_smoothed")
    g = state.gamma
    return tuple(g * v + (1.0 - g) * d for v, d in zip(state.v, grads))


def sgd_step(state, params, grads):
    """Plain SGD step on ``params``; returns ``(new_params, new_state)``."""
    _check(params, grads, "sgd_step")
    v = update_smoothed(state, grads)
    new = [w - state.eta * d for w, d in zip(params, grads)]
    return new, replace(state, v=v)


def momentum_step(state, params, grads):
    """Step along the updated smoothed gradient; returns ``(new_params, new_state)``."""
    _check(params, grads, "momentum_step")
    v = update_smoothed(state, grads)
    new = [w - state.eta * d for w, d in zip(params, v)]
    return new, replace(state, v=v)


def apply_update(state, params, grads, rule="momentum"):
    if rule == "momentum":
        return momentum_step(state, params, grads)
    if rule == "sgd":
        return sgd_step(state, params, grads)
    raise InputError(f"unknown update rule {rule!r}")


def version_difference(ctx):
    """How many updates separate a task from its mini-batch's round-trip completion.

    Device ``k`` of ``n``: ``k // 2 + n - k - 1`` for a forward task and
    ``k // 2`` for a backward task.
    """
    half = ctx.k // 2
    if ctx.direction == "forward":
        return half + ctx.n - ctx.k - 1
    return half


def predict_weights(params, state, s):
    """Extrapolate ``params`` by ``s`` updates along the smoothed gradient."""
    if s < 0:
        raise InputError(f"version difference must be non-negative, got {s}")
    _check(params, state.v, "predict_weights")
    if s == 0:
        return [w.copy() for w in params]
    step = s * state.eta
    return [w - step * v for w, v in zip(params, state.v)]
