"""How far stale and predicted weights sit from the weights they stand in for."""

from dataclasses import dataclass

import numpy as np

from .errors import DivergedError, InputError
from .nn import loss_and_grad
from .numcore import rmse
from .optim import DEFAULT_GAMMA, OptimState, apply_update


@dataclass(frozen=True)
class RmseRecord:
    step: int
    s: int
    rmse_pred: float
    rmse_stale: float


@dataclass
class History:
    """Flattened weights ``W_0..W_T`` of one training run.

    ``smoothed[t]`` is the smoothed gradient available while ``W_t`` is
    current, i.e. the one produced by the update that created ``W_t``
    (zeros for ``t = 0``).
    """

    weights: list
    smoothed: list
    eta: float

    def __len__(self):
        return len(self.weights)


def _flat(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def record_history(spec, params, stream, steps, eta, gamma=DEFAULT_GAMMA, rule="momentum"):
    """Train on one device and keep every weight version."""
    params = [p.copy() for p in params]
    optim = OptimState.zeros_like(params, eta, gamma)
    weights, smoothed = [_flat(params)], [_flat(optim.v)]
    for i in range(steps):
        x, y = next(stream)
        value, grads = loss_and_grad(spec, params, x, y)
        if not np.isfinite(value):
            raise DivergedError(i + 1, value)
        params, optim = apply_update(optim, params, grads, rule)
        weights.append(_flat(params))
        smoothed.append(_flat(optim.v))
    return History(weights, smoothed, eta)


def record_rmse(history, s, eta=None):
    """Compare ``W_{t-s} - s*eta*v`` and the stale ``W_{t-s}`` against ``W_t``."""
    if s < 0:
        raise InputError(f"version difference must be non-negative, got {s}")
    if s >= len(history):
        raise InputError(f"history of {len(history)} versions is too short for s={s}")
    eta = history.eta if eta is None else eta
    out = []
    for t in range(s, len(history)):
        stale = history.weights[t - s]
        actual = history.weights[t]
        predicted = stale - (s * eta) * history.smoothed[t - s] if s else stale
        out.append(RmseRecord(t, s, rmse(predicted, actual), rmse(stale, actual)))
    return out


def summarize(records, warmup=0):
    """Mean errors and the fraction of steps where prediction beats staleness."""
    kept = [r for r in records if r.step >= warmup]
    if not kept:
        raise InputError("no records left after warm-up")
    pred = np.array([r.rmse_pred for r in kept])
    stale = np.array([r.rmse_stale for r in kept])
    return {
        "s": kept[0].s,
        "steps": len(kept),
        "mean_rmse_pred": float(pred.mean()),
        "mean_rmse_stale": float(stale.mean()),
        "dominance": float(np.mean(pred < stale)),
    }
