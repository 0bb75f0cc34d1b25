"""Logical-time simulation of single-device, data-parallel and pipelined training.

Time advances in half-slots. In every half-slot each simulated device runs at
most one task, and a message produced in half-slot ``h`` can be consumed from
``h + 1`` on. A device with a backward task ready runs it; otherwise it runs
the oldest ready forward task. Device 0 admits a new mini-batch only while
fewer than ``N`` are in flight. Once the pipeline fills, every device
alternates one forward and one backward task, device ``k`` of mini-batch ``i``
running its forward in half-slot ``2i + k`` and its backward in
``2i + 2N - 1 - k``.

Two consecutive half-slots form one time unit; weight prediction targets the
version each device holds at the start of the time unit in which the
mini-batch finishes on device 0.
"""

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedError, InputError, InvariantError
from .nn import backward_stage, evaluate, forward_stage, loss_and_grad, loss_from_output, stage_slice
from .optim import DEFAULT_GAMMA, OptimState, PredictionContext, apply_update, predict_weights, version_difference

STRATEGIES = ("single", "data_parallel", "vanilla", "stash", "spectrain")
PIPELINE_STRATEGIES = ("vanilla", "stash", "spectrain")
PARAMETER_SERVER = -1


@dataclass(frozen=True)
class TaskEvent:
    slot: int
    device: int
    direction: str
    minibatch: int
    version_used: int
    version_current: int


@dataclass(frozen=True)
class Transfer:
    src: int
    dst: int
    elements: int
    kind: str
    minibatch: int


@dataclass(frozen=True)
class MetricsRow:
    step: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class RunResult:
    params: list
    metrics: list = field(default_factory=list)
    traffic: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    losses: list = field(default_factory=list)


@dataclass
class Device:
    index: int
    layers: tuple
    params: list
    optim: OptimState
    version: int = 0
    stash: dict = field(default_factory=dict)
    packs: dict = field(default_factory=dict)


class _Recorder:
    """Collects per-step losses and emits metric rows at the eval cadence."""

    def __init__(self, spec, val, eval_every):
        if eval_every < 1:
            raise InputError(f"eval_every must be positive, got {eval_every}")
        self.spec = spec
        self.val = val
        self.eval_every = eval_every
        self.losses = []
        self.rows = []

    def loss(self, step, value):
        if not np.isfinite(value):
            raise DivergedError(step, value)
        self.losses.append(value)

    def step_done(self, step, params_fn):
        if step % self.eval_every:
            return
        train_loss = float(np.mean(self.losses[step - self.eval_every:step]))
        if self.val is None:
            val_loss = val_acc = float("nan")
        else:
            val_loss, val_acc = evaluate(self.spec, params_fn(), *self.val)
        self.rows.append(MetricsRow(step, train_loss, val_loss, val_acc))


def _copy(params):
    return [p.copy() for p in params]


def train_single(spec, params, stream, steps, eta, gamma=DEFAULT_GAMMA, rule="momentum",
                 val=None, eval_every=20):
    """Reference single-device momentum SGD loop."""
    params = _copy(params)
    optim = OptimState.zeros_like(params, eta, gamma)
    rec = _Recorder(spec, val, eval_every)
    trace = []
    for i in range(steps):
        x, y = next(stream)
        value, grads = loss_and_grad(spec, params, x, y)
        rec.loss(i + 1, value)
        trace.append(TaskEvent(2 * i, 0, "F", i, i, i))
        trace.append(TaskEvent(2 * i + 1, 0, "B", i, i, i))
        params, optim = apply_update(optim, params, grads, rule)
        rec.step_done(i + 1, lambda: params)
    return RunResult(params, rec.rows, [], trace, rec.losses)


def run_data_parallel(spec, params, replicas, stream, steps, eta, gamma=DEFAULT_GAMMA,
                      rule="momentum", val=None, eval_every=20):
    """Synchronous data parallelism with shard-mean gradient aggregation.

    Each mini-batch is split into ``replicas`` equal shards. Every replica
    pushes its gradient to the parameter server and pulls back the updated
    weights, so each step moves ``2 * replicas * n_params`` elements.
    """
    if replicas < 1:
        raise InputError(f"need at least one replica, got {replicas}")
    params = _copy(params)
    optim = OptimState.zeros_like(params, eta, gamma)
    n_params = spec.n_params
    rec = _Recorder(spec, val, eval_every)
    trace, traffic = [], []
    for i in range(steps):
        x, y = next(stream)
        if x.shape[0] % replicas:
            raise InputError(f"mini-batch of {x.shape[0]} rows cannot be split over {replicas} replicas")
        shard_losses, agg = [], None
        for g, (xs, ys) in enumerate(zip(np.split(x, replicas), np.split(y, replicas))):
            value, grads = loss_and_grad(spec, params, xs, ys)
            shard_losses.append(value)
            if agg is None:
                agg = _copy(grads)
            else:
                for a, d in zip(agg, grads):
                    a += d
            trace.append(TaskEvent(2 * i, g, "F", i, i, i))
            trace.append(TaskEvent(2 * i + 1, g, "B", i, i, i))
            traffic.append(Transfer(g, PARAMETER_SERVER, n_params, "weight_sync", i))
        for a in agg:
            a /= replicas
        for g in range(replicas):
            traffic.append(Transfer(PARAMETER_SERVER, g, n_params, "weight_sync", i))
        rec.loss(i + 1, float(np.mean(shard_losses)))
        params, optim = apply_update(optim, params, agg, rule)
        rec.step_done(i + 1, lambda: params)
    return RunResult(params, rec.rows, traffic, trace, rec.losses)


def choose_task_weights(device, minibatch, direction, strategy, n_devices):
    """Weights a task computes with, and the version number they stand for.

    ``direction`` is ``"F"`` or ``"B"``. Under ``stash`` a forward task records
    the weights it used and the matching backward task takes them back out.
    """
    if strategy == "vanilla":
        return device.params, device.version
    if strategy == "stash":
        if direction == "F":
            device.stash[minibatch] = (device.version, device.params)
            if len(device.stash) > n_devices:
                raise InvariantError(f"device {device.index} stashed {len(device.stash)} versions")
            return device.params, device.version
        try:
            version, params = device.stash.pop(minibatch)
        except KeyError:
            raise InvariantError(
                f"device {device.index} has no stashed weights for mini-batch {minibatch}"
            ) from None
        return params, version
    if strategy == "spectrain":
        ctx = PredictionContext(device.index, n_devices, "forward" if direction == "F" else "backward")
        s = version_difference(ctx)
        return predict_weights(device.params, device.optim, s), device.version + s
    raise InputError(f"strategy {strategy!r} is not a pipeline strategy")


def run_schedule(spec, plan, strategy, params, stream, steps, eta, gamma=DEFAULT_GAMMA,
                 rule="momentum", val=None, eval_every=20):
    """Pipelined model-parallel training over ``plan.n_devices`` stages."""
    if strategy not in PIPELINE_STRATEGIES:
        raise InputError(f"strategy must be one of {PIPELINE_STRATEGIES}, got {strategy!r}")
    n = plan.n_devices
    ranges = plan.stage_ranges(len(spec.layers))
    devices = []
    for k, (lo, hi) in enumerate(ranges):
        p = _copy(stage_slice(params, lo, hi))
        devices.append(Device(k, spec.layers[lo:hi], p, OptimState.zeros_like(p, eta, gamma)))

    def assembled():
        return [p for d in devices for p in d.params]

    rec = _Recorder(spec, val, eval_every)
    fwd_inbox = [dict() for _ in range(n)]
    bwd_inbox = [dict() for _ in range(n)]
    targets, losses = {}, {}
    trace, traffic = [], []
    injected = completed = 0
    slot = 0
    while completed < steps:
        outbox = []
        for dev in devices:
            k = dev.index
            if bwd_inbox[k]:
                mb = min(bwd_inbox[k])
                grad_out = bwd_inbox[k].pop(mb)
                w, used = choose_task_weights(dev, mb, "B", strategy, n)
                trace.append(TaskEvent(slot, k, "B", mb, used, dev.version))
                grad_in, grads = backward_stage(dev.layers, w, dev.packs.pop(mb), grad_out)
                dev.params, dev.optim = apply_update(dev.optim, dev.params, grads, rule)
                dev.version += 1
                if k > 0:
                    outbox.append(("B", k - 1, mb, grad_in))
                    traffic.append(Transfer(k, k - 1, grad_in.size, "gradient", mb))
                else:
                    if mb != completed:
                        raise InvariantError(f"mini-batch {mb} finished before {completed}")
                    completed += 1
                    rec.step_done(completed, assembled)
                continue
            if k == 0:
                if injected >= steps or injected - completed >= n:
                    continue
                mb = injected
                injected += 1
                x, targets[mb] = next(stream)
            elif fwd_inbox[k]:
                mb = min(fwd_inbox[k])
                x = fwd_inbox[k].pop(mb)
            else:
                continue
            w, used = choose_task_weights(dev, mb, "F", strategy, n)
            trace.append(TaskEvent(slot, k, "F", mb, used, dev.version))
            out, dev.packs[mb] = forward_stage(dev.layers, w, x)
            if k < n - 1:
                outbox.append(("F", k + 1, mb, out))
                traffic.append(Transfer(k, k + 1, out.size, "activation", mb))
            else:
                value, dy = loss_from_output(spec.loss, out, targets.pop(mb))
                losses[mb] = value
                rec.loss(mb + 1, value)
                outbox.append(("B", k, mb, dy))
        for direction, k, mb, payload in outbox:
            (fwd_inbox if direction == "F" else bwd_inbox)[k][mb] = payload
        slot += 1
    check_dependencies(trace, n)
    return RunResult(assembled(), rec.rows, traffic, trace, [losses[i] for i in range(steps)])


def check_dependencies(trace, n_devices):
    """Raise :class:`InvariantError` if any mini-batch's tasks ran out of order."""
    when = {}
    busy = set()
    for ev in trace:
        key = (ev.slot, ev.device)
        if key in busy:
            raise InvariantError(f"device {ev.device} ran two tasks in slot {ev.slot}")
        busy.add(key)
        when[(ev.direction, ev.minibatch, ev.device)] = ev.slot
    for (direction, mb, k), slot in when.items():
        if direction == "F":
            before = ("F", mb, k - 1) if k > 0 else None
        elif k == n_devices - 1:
            before = ("F", mb, k)
        else:
            before = ("B", mb, k + 1)
        if before is None:
            continue
        if before not in when or when[before] >= slot:
            raise InvariantError(f"{direction}({mb}, {k}) ran before its predecessor {before}")


def emit_trace(events):
    """One line per event, ordered by slot then device."""
    lines = ["slot,device,direction,minibatch,version_used,version_current"]
    for ev in sorted(events, key=lambda e: (e.slot, e.device)):
        lines.append(f"{ev.slot},{ev.device},{ev.direction},{ev.minibatch},"
                     f"{ev.version_used},{ev.version_current}")
    return "\n".join(lines) + "\n"


def measure_version_lags(trace, n_devices):
    """Updates separating each task from its mini-batch's completion version.

    A mini-batch completes in the half-slot ``c`` of its backward task on
    device 0. Device ``k``'s completion version is the number of backward
    tasks device ``k`` finished before half-slot ``2 * (c // 2)``, i.e. before
    the time unit containing ``c`` began. Returns
    ``{(minibatch, device, direction): lag}``.
    """
    backward_slots = defaultdict(list)
    completion = {}
    for ev in trace:
        if ev.direction == "B":
            backward_slots[ev.device].append(ev.slot)
            if ev.device == 0:
                completion[ev.minibatch] = ev.slot
    for slots in backward_slots.values():
        slots.sort()
    lags = {}
    for ev in trace:
        c = completion.get(ev.minibatch)
        if c is None:
            continue
        target = int(np.searchsorted(backward_slots[ev.device], 2 * (c // 2)))
        lags[(ev.minibatch, ev.device, ev.direction)] = target - ev.version_current
    return lags


def staleness_mismatches(trace, device=0):
    """Mini-batches whose forward and backward on ``device`` computed with
    different weight versions."""
    fwd, bwd = {}, {}
    for ev in trace:
        if ev.device != device:
            continue
        if ev.direction == "F":
            fwd[ev.minibatch] = ev.version_used
        else:
            bwd[ev.minibatch] = ev.version_used
    return sorted(mb for mb in fwd if mb in bwd and fwd[mb] != bwd[mb])
