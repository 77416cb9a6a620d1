"""Layered feed-forward networks with weighted-sum, convolution, ReLU and max-pooling layers.

Networks are immutable after construction and evaluation is pure, so instances
can be shared freely. An "abstract" network is an ordinary network whose
``promoted`` neurons have had their incoming edges cut (they behave as extra,
bounded inputs) and whose ``pruned`` neurons are disconnected from the output
and excluded from every computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NeuronId = tuple[int, int]  # (layer index, flat index within layer)


class NetworkStructureError(ValueError):
    """Raised when layer sizes, weights or inputs are inconsistent."""


@dataclass(frozen=True)
class LayerShape:
    """Row-major multi-dimensional arrangement of a layer's neurons."""

    dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.dims) == 0 or any(d < 1 for d in self.dims):
            raise NetworkStructureError(f"bad layer shape {self.dims}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def size(self) -> int:
        return math.prod(self.dims)

    def coordinates(self, flat_index: int) -> tuple[int, ...]:
        """Row-major coordinates of a flat index; inverse of `flat_index`."""
        if not 0 <= flat_index < self.size:
            raise NetworkStructureError(
                f"index {flat_index} out of range for shape {self.dims}")
        coords = []
        for d in reversed(self.dims):
            coords.append(flat_index % d)
            flat_index //= d
        return tuple(reversed(coords))

    def flat_index(self, coords: tuple[int, ...]) -> int:
        if len(coords) != len(self.dims):
            raise NetworkStructureError(f"coords {coords} do not match {self.dims}")
        flat = 0
        for c, d in zip(coords, self.dims):
            if not 0 <= c < d:
                raise NetworkStructureError(f"coords {coords} out of range {self.dims}")
            flat = flat * d + c
        return flat


@dataclass(frozen=True, eq=False)
class Layer:
    shape: LayerShape

    kind = "abstract"

    @property
    def size(self) -> int:
        return self.shape.size


@dataclass(frozen=True, eq=False)
class InputLayer(Layer):
    kind = "input"


@dataclass(frozen=True, eq=False)
class WeightedSumLayer(Layer):
    """Fully-connected layer: v = bias + weights @ u.

    ``tag`` marks weighted sums that stand in for structured layers: "conv"
    for a lowered convolution, "perm" for a 0/1 reindexing layer. Tagged
    layers do not count as fully-connected when picking an abstraction layer.
    """

    weights: np.ndarray = None  # (this size, previous size)
    bias: np.ndarray = None     # (this size,)
    tag: str | None = None

    kind = "ws"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],) or w.shape[0] != self.size:
            raise NetworkStructureError(
                f"weighted sum shapes inconsistent: W{w.shape}, B{b.shape}, size {self.size}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True, eq=False)
class OutputLayer(WeightedSumLayer):
    kind = "output"


@dataclass(frozen=True, eq=False)
class ConvolutionLayer(Layer):
    """1-D convolution, stride 1: v[i] = bias + sum_j kernel[j] * u[i + j]."""

    kernel: np.ndarray = None
    bias: float = 0.0

    kind = "conv"

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 1 or k.size < 1:
            raise NetworkStructureError(f"bad convolution kernel shape {k.shape}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", float(self.bias))


@dataclass(frozen=True, eq=False)
class ReluLayer(Layer):
    kind = "relu"


@dataclass(frozen=True, eq=False)
class MaxPoolLayer(Layer):
    """Non-overlapping pooling: v[i] = max(u[i*k : (i+1)*k])."""

    pool_size: int = 2

    kind = "maxpool"

    def pool(self, i: int) -> range:
        return range(i * self.pool_size, (i + 1) * self.pool_size)


@dataclass(frozen=True, eq=False)
class Network:
    """An ordered stack of layers, first Input, last Output.

    ``promoted`` maps neuron ids whose incoming edges were cut to their
    [lower, upper] input bounds; ``pruned`` holds hidden neurons with no
    remaining path to the output. Both are empty for concrete networks.
    """

    layers: tuple[Layer, ...]
    name: str = "net"
    promoted: dict[NeuronId, tuple[float, float]] = field(default_factory=dict)
    pruned: frozenset[NeuronId] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "pruned", frozenset(self.pruned))
        self._validate()

    def _validate(self):
        if len(self.layers) < 2:
            raise NetworkStructureError("network needs at least input and output layers")
        if not isinstance(self.layers[0], InputLayer):
            raise NetworkStructureError("first layer must be an input layer")
        if not isinstance(self.layers[-1], OutputLayer):
            raise NetworkStructureError("last layer must be an output layer")
        for i, layer in enumerate(self.layers[1:], start=1):
            prev = self.layers[i - 1].size
            if isinstance(layer, InputLayer):
                raise NetworkStructureError("input layer only allowed first")
            if isinstance(layer, WeightedSumLayer):
                if layer.weights.shape[1] != prev:
                    raise NetworkStructureError(
                        f"layer {i}: weight columns {layer.weights.shape[1]} != {prev}")
            elif isinstance(layer, ConvolutionLayer):
                k = layer.kernel.size
                if k > prev or layer.size != prev - k + 1:
                    raise NetworkStructureError(
                        f"layer {i}: convolution size {layer.size} != {prev} - {k} + 1")
            elif isinstance(layer, ReluLayer):
                if layer.size != prev:
                    raise NetworkStructureError(f"layer {i}: relu size {layer.size} != {prev}")
            elif isinstance(layer, MaxPoolLayer):
                if prev % layer.pool_size != 0 or layer.size != prev // layer.pool_size:
                    raise NetworkStructureError(
                        f"layer {i}: pool size {layer.pool_size} does not tile {prev}")
        for lid, idx in set(self.promoted) | self.pruned:
            if not 0 < lid < len(self.layers) or not 0 <= idx < self.layers[lid].size:
                raise NetworkStructureError(f"bad neuron id ({lid}, {idx})")
        if set(self.promoted) & self.pruned:
            raise NetworkStructureError("a neuron cannot be both promoted and pruned")

    @property
    def input_size(self) -> int:
        return self.layers[0].size

    @property
    def output_size(self) -> int:
        return self.layers[-1].size

    @property
    def promoted_ids(self) -> list[NeuronId]:
        return sorted(self.promoted)

    @property
    def extended_input_size(self) -> int:
        """Inputs expected by `evaluate`: original inputs plus promoted neurons."""
        return self.input_size + len(self.promoted)

    def is_active(self, nid: NeuronId) -> bool:
        return nid not in self.pruned

    def neuron_count(self) -> int:
        """Neurons taking part in evaluation (pruned ones excluded)."""
        return sum(layer.size for layer in self.layers) - len(self.pruned)

    def evaluate(self, x: np.ndarray) -> list[np.ndarray]:
        """Run the network, returning every layer's value vector.

        For abstract networks ``x`` is the original input followed by the
        promoted neurons' values in ascending neuron-id order. Pruned neurons
        get value 0, which nothing downstream reads.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.extended_input_size,):
            raise NetworkStructureError(
                f"input length {x.shape} != {(self.extended_input_size,)}")
        promoted_vals = dict(zip(self.promoted_ids, x[self.input_size:]))
        values = [x[: self.input_size]]
        for lid, layer in enumerate(self.layers[1:], start=1):
            u = values[-1]
            if isinstance(layer, WeightedSumLayer):
                v = layer.bias + layer.weights @ u
            elif isinstance(layer, ConvolutionLayer):
                v = layer.bias + np.convolve(u, layer.kernel[::-1], mode="valid")
            elif isinstance(layer, ReluLayer):
                v = np.maximum(u, 0.0)
            elif isinstance(layer, MaxPoolLayer):
                v = u.reshape(-1, layer.pool_size).max(axis=1)
            else:
                raise NetworkStructureError(f"cannot evaluate layer kind {layer.kind}")
            for idx in range(layer.size):
                nid = (lid, idx)
                if nid in promoted_vals:
                    v[idx] = promoted_vals[nid]
                elif nid in self.pruned:
                    v[idx] = 0.0
            values.append(v)
        return values

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.evaluate(x)[-1]

    def same_structure(self, other: "Network") -> bool:
        """Structural equality: layers, weights, promoted set and pruned set."""
        if len(self.layers) != len(other.layers):
            return False
        if self.promoted != other.promoted or self.pruned != other.pruned:
            return False
        for a, b in zip(self.layers, other.layers):
            if type(a) is not type(b) or a.shape != b.shape:
                return False
            if isinstance(a, WeightedSumLayer):
                if not np.array_equal(a.weights, b.weights) or not np.array_equal(a.bias, b.bias):
                    return False
                if a.tag != b.tag:
                    return False
            elif isinstance(a, ConvolutionLayer):
                if not np.array_equal(a.kernel, b.kernel) or a.bias != b.bias:
                    return False
            elif isinstance(a, MaxPoolLayer):
                if a.pool_size != b.pool_size:
                    return False
        return True


def neuron_coordinates(shape: LayerShape, flat_index: int) -> tuple[int, ...]:
    """Row-major coordinates of a neuron within its layer's shape."""
    return shape.coordinates(flat_index)


def lower_convolution(layer: ConvolutionLayer, prev_size: int) -> WeightedSumLayer:
    """Rewrite a 1-D convolution as an equivalent banded weighted sum."""
    k = layer.kernel.size
    t = prev_size - k + 1
    w = np.zeros((t, prev_size))
    for i in range(t):
        w[i, i:i + k] = layer.kernel
    return WeightedSumLayer(shape=layer.shape, weights=w,
                            bias=np.full(t, layer.bias), tag="conv")


def flatten(net: Network) -> Network:
    """Replace every convolution layer by an equivalent sparse weighted sum."""
    layers = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvolutionLayer):
            layers.append(lower_convolution(layer, net.layers[i - 1].size))
        else:
            layers.append(layer)
    return Network(layers=tuple(layers), name=net.name,
                   promoted=dict(net.promoted), pruned=net.pruned)
