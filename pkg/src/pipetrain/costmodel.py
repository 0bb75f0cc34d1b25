"""Closed-form communication and step-time estimates for data vs. model parallelism.

Work is measured in the FLOP-proxy units of :func:`estimate_layer_cost`,
transfers in tensor elements. Transfers may run concurrently as long as no
two share a source or share a destination.
"""

import math
from dataclasses import asdict, dataclass

from .errors import InputError
from .partition import estimate_layer_cost


@dataclass(frozen=True)
class HardwareProfile:
    compute_rate: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        if not (self.compute_rate > 0 and self.bandwidth > 0):
            raise InputError("compute rate and bandwidth must be positive")


@dataclass(frozen=True)
class Breakdown:
    computing: float
    p2p_transfer: float
    p2p_idle: float
    imbalance_idle: float

    @property
    def step_time(self):
        return self.computing + self.p2p_transfer + self.p2p_idle + self.imbalance_idle


def comm_volume(spec, mode, batch, plan=None, replicas=None):
    """Elements moved between devices for one mini-batch."""
    if mode == "dp":
        if not replicas or replicas < 1:
            raise InputError("dp mode needs a replica count")
        return 2 * replicas * spec.n_params
    if mode == "mp":
        if plan is None:
            raise InputError("mp mode needs a stage plan")
        return sum(2 * batch * spec.layers[c - 1].out_dim for c in plan.cuts)
    raise InputError(f"mode must be 'dp' or 'mp', got {mode!r}")


def _model_cost(spec, batch):
    return sum(estimate_layer_cost(layer, batch) for layer in spec.layers)


def estimate_breakdown(spec, mode, batch, profile, plan=None, replicas=None):
    """Per-mini-batch time split into computing, transfer and idle components.

    Data parallelism: replicas compute their shard, then synchronise through
    one parameter server, whose single endpoint serialises the transfers; a
    replica's own push and pull count as transfer time, waiting on the others
    as P2P-induced idle. Model parallelism: the slowest stage sets the pace,
    and boundary transfers hide behind computation up to its length.
    """
    rate, bw = profile.compute_rate, profile.bandwidth
    if mode == "dp":
        if not replicas or replicas < 1:
            raise InputError("dp mode needs a replica count")
        shards = [batch // replicas + (1 if g < batch % replicas else 0) for g in range(replicas)]
        work = [_model_cost(spec, b) / rate for b in shards]
        mean = sum(work) / len(work)
        per_replica = 2 * spec.n_params / bw if math.isfinite(bw) else 0.0
        return Breakdown(mean, per_replica, per_replica * (replicas - 1), max(work) - mean)
    if mode == "mp":
        if plan is None:
            raise InputError("mp mode needs a stage plan")
        work = [c / rate for c in plan.stage_costs]
        mean = sum(work) / len(work)
        bottleneck = max(work)
        # a device sends its activation forward and its input gradient backward
        sends = [0] * plan.n_devices
        for j, c in enumerate(plan.cuts):
            width = batch * spec.layers[c - 1].out_dim
            sends[j] += width
            sends[j + 1] += width
        link = max(sends) / bw if math.isfinite(bw) else 0.0
        return Breakdown(mean, 0.0, max(0.0, link - bottleneck), bottleneck - mean)
    raise InputError(f"mode must be 'dp' or 'mp', got {mode!r}")


def report(spec, mode, batch, profile, plan=None, replicas=None):
    """JSON-ready summary of one configuration."""
    bd = estimate_breakdown(spec, mode, batch, profile, plan, replicas)
    step = bd.step_time
    return {
        "mode": mode,
        "comm_elements": comm_volume(spec, mode, batch, plan, replicas),
        "step_time": step,
        "breakdown": asdict(bd),
        "throughput": batch / step if step > 0 else float("inf"),
    }
