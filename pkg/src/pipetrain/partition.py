"""Contiguous layer-to-device partitioning that minimises the slowest stage."""

import json
from dataclasses import asdict, dataclass

from .errors import InputError


@dataclass(frozen=True)
class StagePlan:
    """``cuts[j]`` is the index of the first layer of stage ``j + 1``."""

    n_devices: int
    cuts: tuple
    stage_costs: tuple
    boundary_sizes: tuple

    @property
    def bottleneck(self):
        return max(self.stage_costs)

    def stage_ranges(self, n_layers):
        edges = (0, *self.cuts, n_layers)
        return [(edges[j], edges[j + 1]) for j in range(self.n_devices)]

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


def estimate_layer_cost(layer, batch):
    """Dense FLOP proxy: one unit per multiply-accumulate of ``x @ W``."""
    return float(batch * layer.in_dim * layer.out_dim)


def plan_from_cuts(spec, cuts, batch, layer_costs=None):
    """Build a :class:`StagePlan` for explicit cut positions."""
    n_layers = len(spec.layers)
    cuts = tuple(int(c) for c in cuts)
    if any(not 0 < c < n_layers for c in cuts) or any(a >= b for a, b in zip(cuts, cuts[1:])):
        raise InputError(f"cuts must be strictly increasing inside (0, {n_layers}), got {cuts}")
    costs = _costs(spec, batch, layer_costs)
    edges = (0, *cuts, n_layers)
    stage_costs = tuple(sum(costs[edges[j]:edges[j + 1]]) for j in range(len(edges) - 1))
    boundary = tuple(batch * spec.layers[c - 1].out_dim for c in cuts)
    return StagePlan(len(cuts) + 1, cuts, stage_costs, boundary)


def _costs(spec, batch, layer_costs):
    if layer_costs is None:
        return [estimate_layer_cost(layer, batch) for layer in spec.layers]
    if len(layer_costs) != len(spec.layers):
        raise InputError(f"got {len(layer_costs)} layer costs for {len(spec.layers)} layers")
    return [float(c) for c in layer_costs]


def balance_partition(spec, n_devices, batch, layer_costs=None):
    """Split layers into ``n_devices`` contiguous stages minimising the max stage cost.

    Exact dynamic program over prefix sums, O(N * L^2). Ties go to the
    earliest feasible cut so results are reproducible.
    """
    n_layers = len(spec.layers)
    if n_devices < 1:
        raise InputError(f"need at least one device, got {n_devices}")
    if n_devices > n_layers:
        raise InputError(f"cannot split {n_layers} layers over {n_devices} devices")
    costs = _costs(spec, batch, layer_costs)
    prefix = [0.0]
    for c in costs:
        prefix.append(prefix[-1] + c)

    inf = float("inf")
    # best[p][i]: minimal bottleneck placing the first i layers on p devices
    best = [[inf] * (n_layers + 1) for _ in range(n_devices + 1)]
    arg = [[0] * (n_layers + 1) for _ in range(n_devices + 1)]
    best[0][0] = 0.0
    for p in range(1, n_devices + 1):
        for i in range(p, n_layers - (n_devices - p) + 1):
            for j in range(p - 1, i):
                cand = max(best[p - 1][j], prefix[i] - prefix[j])
                if cand < best[p][i]:
                    best[p][i] = cand
                    arg[p][i] = j

    cuts = []
    i = n_layers
    for p in range(n_devices, 1, -1):
        i = arg[p][i]
        cuts.append(i)
    return plan_from_cuts(spec, reversed(cuts), batch, costs)
