"""Network partitioning: the adaptive split plan, cross-partition weight
groups, explicit disconnection into a shared trunk plus two branches, and
zero-initialized reconnection.

Layers are indexed 0-based. A plan covers layers split_index .. depth-1;
within each partitioned layer the old group takes the low output indices and
the new group the high ones, and the final layer is split by class ownership
(old classes low, new classes high).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .net import DenseNet, Layer, IDENTITY, ShapeError


@dataclass
class PartitionPlan:
    split_index: int            # first layer eligible for partitioning
    depth: int
    rho: float
    c_old: int
    c_new: int
    old_out: dict[int, np.ndarray] = field(default_factory=dict)
    new_out: dict[int, np.ndarray] = field(default_factory=dict)
    shared_layers: set[int] = field(default_factory=set)

    def is_partitioned(self, layer: int) -> bool:
        return layer >= self.split_index and layer not in self.shared_layers

    def input_groups(self, layer: int):
        """Old/new input-node groups of `layer` (output groups of layer-1).

        Empty when the previous layer belongs to the shared trunk, as for the
        first partitioned layer.
        """
        prev = layer - 1
        if prev < self.split_index or prev in self.shared_layers:
            empty = np.array([], dtype=np.int64)
            return empty, empty
        return self.old_out[prev], self.new_out[prev]

    def summary(self) -> dict:
        """JSON-ready record for the run manifest."""
        return {
            "split_index": self.split_index,
            "rho": self.rho,
            "c_old": self.c_old,
            "c_new": self.c_new,
            "layers": [
                {
                    "layer": li,
                    "shared": li in self.shared_layers,
                    "old_size": int(self.old_out[li].size) if li in self.old_out else None,
                    "new_size": int(self.new_out[li].size) if li in self.new_out else None,
                }
                for li in range(self.split_index, self.depth)
            ],
        }


@dataclass
class CrossGroups:
    """Per layer: boolean selectors of the old-to-new and new-to-old weights."""

    per_layer: dict[int, tuple[np.ndarray, np.ndarray]]

    def total_count(self) -> int:
        return sum(int(a.sum() + b.sum()) for a, b in self.per_layer.values())


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_plan(net: DenseNet, split_index: int, c_old: int, c_new: int, rho: float) -> PartitionPlan:
    """Allocate old/new node groups for layers split_index..depth-1.

    Hidden-layer allocation follows |old| : |new| = rho*c_old : (1-rho)*c_old + c_new,
    rounded half-up on the new share and clamped so both groups keep at least
    one node. A layer whose new share falls below one node stays shared. The
    final layer is always split by class ownership.
    """
    depth = net.depth
    if not (0 <= split_index < depth):
        raise ValueError(f"split_index {split_index} out of range for depth {depth}")
    if c_old < 1 or c_new < 1:
        raise ValueError("need c_old >= 1 and c_new >= 1")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if net.num_classes != c_old + c_new:
        raise ShapeError(
            f"net has {net.num_classes} outputs, expected c_old + c_new = {c_old + c_new}"
        )

    plan = PartitionPlan(split_index, depth, rho, c_old, c_new)
    new_share = (1.0 - rho) * c_old + c_new
    old_share = rho * c_old
    for li in range(split_index, depth - 1):
        width = net.layers[li].out_dim
        if width < 1:
            raise ValueError(f"layer {li} has zero width")
        n_new = _round_half_up(width * max(0.0, new_share) / (old_share + max(0.0, new_share)))
        if n_new < 1:
            plan.shared_layers.add(li)
            continue
        n_new = min(n_new, width - 1)
        plan.old_out[li] = np.arange(0, width - n_new, dtype=np.int64)
        plan.new_out[li] = np.arange(width - n_new, width, dtype=np.int64)
    last = depth - 1
    plan.old_out[last] = np.arange(0, c_old, dtype=np.int64)
    plan.new_out[last] = np.arange(c_old, c_old + c_new, dtype=np.int64)
    return plan


def cross_groups(plan: PartitionPlan, net: DenseNet) -> CrossGroups:
    """Enumerate the weights connecting opposite partitions in each layer."""
    per_layer = {}
    for li in range(plan.split_index, plan.depth):
        if not plan.is_partitioned(li):
            continue
        layer = net.layers[li]
        in_old, in_new = plan.input_groups(li)
        out_old = plan.old_out[li]
        out_new = plan.new_out[li]
        if out_old.size and out_old.max() >= layer.out_dim:
            raise ShapeError(f"plan group exceeds layer {li} width")
        on = np.zeros(layer.w.shape, dtype=bool)
        no = np.zeros(layer.w.shape, dtype=bool)
        if in_old.size:
            on[np.ix_(in_old, out_new)] = True
            no[np.ix_(in_new, out_old)] = True
        per_layer[li] = (on, no)
    return CrossGroups(per_layer)


def disconnect(net: DenseNet, groups: CrossGroups) -> None:
    """Zero every cross-partition weight and clear its mask bit, in place.

    Afterwards the network computes the branched form: no path connects the
    old branch to the new branch above the shared trunk. Idempotent.
    """
    for li, (on, no) in groups.per_layer.items():
        layer = net.layers[li]
        if layer.mask is None:
            layer.mask = np.ones_like(layer.w)
        cut = on | no
        layer.w[cut] = 0.0
        layer.mask[cut] = 0.0


def bridge_reconnect(net: DenseNet, groups: CrossGroups) -> None:
    """Restore mask bits at previously disconnected positions, weights at 0.0."""
    for li, (on, no) in groups.per_layer.items():
        layer = net.layers[li]
        cut = on | no
        if layer.mask is None or (layer.mask[cut] != 0.0).any():
            raise ValueError(f"layer {li}: reconnecting positions that were never disconnected")
        layer.mask[cut] = 1.0
        layer.w[cut] = 0.0


def extract_subnet(net: DenseNet, plan: PartitionPlan, side: str) -> DenseNet:
    """Standalone copy of the shared trunk plus one branch.

    The result maps inputs to that side's sub-logits only; its outputs equal
    the corresponding slice of the parent's logits whenever the parent is
    disconnected under `plan`. Use copy_back_subnet to push trained parameters
    into the parent.
    """
    if side not in ("old", "new"):
        raise ValueError("side must be 'old' or 'new'")
    groups_of = plan.old_out if side == "old" else plan.new_out
    layers = []
    for li, layer in enumerate(net.layers):
        if not plan.is_partitioned(li):
            layers.append(Layer(layer.w.copy(), layer.b.copy(), layer.activation,
                                None if layer.mask is None else layer.mask.copy()))
            continue
        in_old, in_new = plan.input_groups(li)
        in_idx = (in_old if side == "old" else in_new)
        if in_idx.size == 0:
            in_idx = np.arange(layer.in_dim, dtype=np.int64)
        out_idx = groups_of[li]
        w = layer.w[np.ix_(in_idx, out_idx)].copy()
        b = layer.b[out_idx].copy()
        mask = None
        if layer.mask is not None:
            mask = layer.mask[np.ix_(in_idx, out_idx)].copy()
        layers.append(Layer(w, b, layer.activation, mask))
    num_out = layers[-1].out_dim
    return DenseNet(layers, num_out)


def copy_back_subnet(sub: DenseNet, net: DenseNet, plan: PartitionPlan, side: str) -> None:
    """Write a subnet's parameters back into their positions in the parent."""
    if side not in ("old", "new"):
        raise ValueError("side must be 'old' or 'new'")
    groups_of = plan.old_out if side == "old" else plan.new_out
    for li, (sub_layer, layer) in enumerate(zip(sub.layers, net.layers)):
        if not plan.is_partitioned(li):
            layer.w[...] = sub_layer.w
            layer.b[...] = sub_layer.b
            continue
        in_old, in_new = plan.input_groups(li)
        in_idx = (in_old if side == "old" else in_new)
        if in_idx.size == 0:
            in_idx = np.arange(layer.in_dim, dtype=np.int64)
        out_idx = groups_of[li]
        layer.w[np.ix_(in_idx, out_idx)] = sub_layer.w
        layer.b[out_idx] = sub_layer.b
