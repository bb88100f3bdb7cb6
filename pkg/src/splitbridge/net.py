"""Dense feed-forward network engine with manual backprop and connectivity masks.

All parameters are float64. A layer holds a weight matrix of shape
(in_dim, out_dim), a bias vector of shape (out_dim,), and an optional
binary mask of the same shape as the weights. A masked-out position
(mask == 0) carries a weight of exactly 0.0 and stays 0.0 through every
engine operation.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

RELU = "relu"
IDENTITY = "identity"

_ACTIVATIONS = (RELU, IDENTITY)

CHECKPOINT_MAGIC = b"SBN1"


class ShapeError(ValueError):
    """Raised when an input or gradient does not match the network's shapes."""


@dataclass
class Layer:
    """One dense layer: out = act(x @ w + b), with an optional binary mask on w."""

    w: np.ndarray
    b: np.ndarray
    activation: str
    mask: np.ndarray | None = None

    @property
    def in_dim(self) -> int:
        return self.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w.shape[1]


@dataclass
class SgdConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 32
    epochs: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


class DenseNet:
    """Ordered dense layers ending in an identity-activation logit layer."""

    def __init__(self, layers: list[Layer], num_classes: int):
        if not layers:
            raise ValueError("a network needs at least one layer")
        for i in range(len(layers) - 1):
            if layers[i].out_dim != layers[i + 1].in_dim:
                raise ShapeError(
                    f"layer {i} out_dim {layers[i].out_dim} != "
                    f"layer {i + 1} in_dim {layers[i + 1].in_dim}"
                )
        if layers[-1].activation != IDENTITY:
            raise ValueError("final layer must use the identity activation")
        if layers[-1].out_dim != num_classes:
            raise ShapeError("final out_dim must equal num_classes")
        self.layers = layers
        self.num_classes = num_classes

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Compute logits for a batch x of shape (n, in_dim)."""
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray):
        """Forward pass that also returns per-layer inputs and pre-activations."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ShapeError(
                f"input dim {x.shape[1]} != layer 0 in_dim {self.in_dim}"
            )
        inputs = []
        preacts = []
        h = x
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.w + layer.b
            preacts.append(z)
            h = np.maximum(z, 0.0) if layer.activation == RELU else z
        return h, inputs, preacts

    def backward(self, x: np.ndarray, upstream: np.ndarray) -> "GradientSet":
        """Backpropagate d(loss)/d(logits) to per-parameter gradients.

        Gradients at masked-out weight positions are exactly zero.
        """
        logits, inputs, preacts = self.forward_cached(x)
        upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if upstream.shape != logits.shape:
            raise ShapeError(
                f"upstream shape {upstream.shape} != logits shape {logits.shape}"
            )
        wgrads = [None] * self.depth
        bgrads = [None] * self.depth
        delta = upstream
        for i in range(self.depth - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == RELU:
                delta = delta * (preacts[i] > 0)
            gw = inputs[i].T @ delta
            if layer.mask is not None:
                gw *= layer.mask
            wgrads[i] = gw
            bgrads[i] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ layer.w.T
        return GradientSet(wgrads, bgrads)

    def clone(self) -> "DenseNet":
        """Deep copy; mutations on either side do not affect the other."""
        return copy.deepcopy(self)

    def apply_masks(self) -> None:
        for layer in self.layers:
            if layer.mask is not None:
                layer.w *= layer.mask

    def widen_output(self, extra: int) -> None:
        """Append `extra` zero-initialized logit columns to the final layer.

        Old-class logits are unchanged for every input.
        """
        if extra < 1:
            raise ValueError("extra must be at least 1")
        last = self.layers[-1]
        last.w = np.hstack([last.w, np.zeros((last.in_dim, extra))])
        last.b = np.concatenate([last.b, np.zeros(extra)])
        if last.mask is not None:
            last.mask = np.hstack([last.mask, np.ones((last.in_dim, extra))])
        self.num_classes += extra

    def save(self, path) -> None:
        """Write the checkpoint format: magic, dims, then raw float64 params."""
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", self.depth, self.num_classes))
            for layer in self.layers:
                act = 0 if layer.activation == IDENTITY else 1
                has_mask = 1 if layer.mask is not None else 0
                f.write(struct.pack("<IIBB", layer.in_dim, layer.out_dim, act, has_mask))
                f.write(np.ascontiguousarray(layer.w, dtype="<f8").tobytes())
                f.write(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
                if layer.mask is not None:
                    f.write(layer.mask.astype(np.uint8).tobytes())

    @classmethod
    def load(cls, path) -> "DenseNet":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"bad checkpoint magic {magic!r} at offset 0")
            depth, num_classes = struct.unpack("<II", f.read(8))
            layers = []
            for _ in range(depth):
                in_dim, out_dim, act, has_mask = struct.unpack("<IIBB", f.read(10))
                w = np.frombuffer(f.read(8 * in_dim * out_dim), dtype="<f8")
                w = w.reshape(in_dim, out_dim).copy()
                b = np.frombuffer(f.read(8 * out_dim), dtype="<f8").copy()
                mask = None
                if has_mask:
                    mask = np.frombuffer(f.read(in_dim * out_dim), dtype=np.uint8)
                    mask = mask.reshape(in_dim, out_dim).astype(np.float64)
                layers.append(Layer(w, b, RELU if act else IDENTITY, mask))
        return cls(layers, num_classes)


@dataclass
class GradientSet:
    """Per-layer weight and bias gradients, shapes mirroring a DenseNet."""

    wgrads: list[np.ndarray]
    bgrads: list[np.ndarray]

    def add_weight_grads(self, extra: list[np.ndarray | None]) -> None:
        for i, g in enumerate(extra):
            if g is not None:
                self.wgrads[i] = self.wgrads[i] + g


@dataclass
class SgdState:
    """Momentum velocity buffers, lazily shaped to the network."""

    vw: list[np.ndarray] = field(default_factory=list)
    vb: list[np.ndarray] = field(default_factory=list)

    def ensure(self, net: DenseNet) -> None:
        if len(self.vw) != net.depth:
            self.vw = [np.zeros_like(l.w) for l in net.layers]
            self.vb = [np.zeros_like(l.b) for l in net.layers]
        else:
            # output widening grows the last layer mid-run
            for i, l in enumerate(net.layers):
                if self.vw[i].shape != l.w.shape:
                    grown = np.zeros_like(l.w)
                    grown[: self.vw[i].shape[0], : self.vw[i].shape[1]] = self.vw[i]
                    self.vw[i] = grown
                if self.vb[i].shape != l.b.shape:
                    grown = np.zeros_like(l.b)
                    grown[: self.vb[i].shape[0]] = self.vb[i]
                    self.vb[i] = grown


def build_net(in_dim: int, hidden: list[int], num_classes: int, seed: int) -> DenseNet:
    """He-uniform initialized MLP: ReLU hidden layers, identity logit layer."""
    rng = np.random.default_rng(seed)
    dims = [in_dim] + list(hidden) + [num_classes]
    layers = []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        limit = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-limit, limit, size=(dims[i], dims[i + 1]))
        b = np.zeros(dims[i + 1])
        act = RELU if i < len(dims) - 2 else IDENTITY
        layers.append(Layer(w, b, act))
    return DenseNet(layers, num_classes)


def sgd_step(net: DenseNet, grads: GradientSet, cfg: SgdConfig, state: SgdState) -> None:
    """In-place momentum SGD update; masks are re-applied after the step."""
    state.ensure(net)
    for i, layer in enumerate(net.layers):
        gw = grads.wgrads[i]
        gb = grads.bgrads[i]
        if gw.shape != layer.w.shape or gb.shape != layer.b.shape:
            raise ShapeError(f"gradient shape mismatch at layer {i}")
        if cfg.weight_decay:
            gw = gw + cfg.weight_decay * layer.w
        state.vw[i] = cfg.momentum * state.vw[i] + gw
        state.vb[i] = cfg.momentum * state.vb[i] + gb
        if layer.mask is not None:
            state.vw[i] *= layer.mask
        layer.w -= cfg.learning_rate * state.vw[i]
        layer.b -= cfg.learning_rate * state.vb[i]
        if layer.mask is not None:
            layer.w *= layer.mask
