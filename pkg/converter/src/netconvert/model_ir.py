"""Framework-neutral description of a sequential CNN.

A model is a tensor shape for the input plus a flat list of layers.  Tensor
shapes keep the axis order of the source framework (channels-last for Keras,
channels-first for ONNX); the lowering step only needs the order to be
consistent from one layer to the next.  Convolution kernels are normalized
to ``(out_channels, in_channels, *spatial)`` regardless of source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class UnsupportedModelError(ValueError):
    """The source model uses a construct the converter does not handle."""


@dataclass(frozen=True)
class Conv:
    """N-D cross-correlation, zero padding. ``kernel``: (cout, cin, *spatial)."""

    kernel: np.ndarray
    bias: np.ndarray          # (cout,)
    strides: tuple[int, ...]  # one entry per spatial dim
    channels_last: bool       # layout of the activation tensors

    kind = "conv"


@dataclass(frozen=True)
class Relu:
    kind = "relu"


@dataclass(frozen=True)
class MaxPool:
    """Non-overlapping N-D max pooling (stride equals the window)."""

    window: tuple[int, ...]
    channels_last: bool

    kind = "maxpool"


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


@dataclass(frozen=True)
class Dense:
    """Affine map on a flat vector. ``weights``: (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    kind = "dense"


Layer = Conv | Relu | MaxPool | Flatten | Dense


@dataclass(frozen=True)
class SequentialModel:
    input_shape: tuple[int, ...]
    layers: tuple[Layer, ...]
    name: str = "model"

    def layer_shapes(self) -> list[tuple[int, ...]]:
        """Tensor shape after the input and after every layer."""
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(_apply_shape(shapes[-1], layer))
        return shapes


def _spatial_and_channels(shape: tuple[int, ...], channels_last: bool):
    if len(shape) < 2:
        raise UnsupportedModelError(
            f"spatial layer applied to flat shape {shape}")
    if channels_last:
        return shape[:-1], shape[-1]
    return shape[1:], shape[0]


def _with_spatial(spatial: tuple[int, ...], channels: int,
                  channels_last: bool) -> tuple[int, ...]:
    return spatial + (channels,) if channels_last else (channels,) + spatial


def _apply_shape(shape: tuple[int, ...], layer: Layer) -> tuple[int, ...]:
    if isinstance(layer, (Relu,)):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Dense):
        n_in = int(np.prod(shape))
        if layer.weights.shape[1] != n_in:
            raise UnsupportedModelError(
                f"dense layer expects {layer.weights.shape[1]} inputs, "
                f"previous shape is {shape}")
        return (layer.weights.shape[0],)
    if isinstance(layer, Conv):
        spatial, cin = _spatial_and_channels(shape, layer.channels_last)
        cout, k_cin, *ker = layer.kernel.shape
        if k_cin != cin or len(ker) != len(spatial):
            raise UnsupportedModelError(
                f"kernel {layer.kernel.shape} does not fit input shape {shape}")
        out = tuple((d - k) // s + 1
                    for d, k, s in zip(spatial, ker, layer.strides))
        if any(o < 1 for o in out):
            raise UnsupportedModelError(
                f"kernel {tuple(ker)} larger than input {spatial}")
        return _with_spatial(out, cout, layer.channels_last)
    if isinstance(layer, MaxPool):
        spatial, c = _spatial_and_channels(shape, layer.channels_last)
        if len(layer.window) != len(spatial):
            raise UnsupportedModelError(
                f"pool window {layer.window} does not fit input shape {shape}")
        out = tuple(d // w for d, w in zip(spatial, layer.window))
        if any(o < 1 for o in out):
            raise UnsupportedModelError(
                f"pool window {layer.window} larger than input {spatial}")
        return _with_spatial(out, c, layer.channels_last)
    raise UnsupportedModelError(f"unknown layer {layer!r}")


def evaluate(model: SequentialModel, x: np.ndarray) -> np.ndarray:
    """Reference forward pass over the intermediate representation."""
    t = np.asarray(x, dtype=float).reshape(model.input_shape)
    for layer in model.layers:
        if isinstance(layer, Relu):
            t = np.maximum(t, 0.0)
        elif isinstance(layer, Flatten):
            t = t.reshape(-1)
        elif isinstance(layer, Dense):
            t = layer.weights @ t.reshape(-1) + layer.bias
        elif isinstance(layer, Conv):
            t = _conv_forward(t, layer)
        elif isinstance(layer, MaxPool):
            t = _pool_forward(t, layer)
        else:
            raise UnsupportedModelError(f"unknown layer {layer!r}")
    return t.reshape(-1)


def _to_channels_first(t: np.ndarray, channels_last: bool) -> np.ndarray:
    return np.moveaxis(t, -1, 0) if channels_last else t


def _from_channels_first(t: np.ndarray, channels_last: bool) -> np.ndarray:
    return np.moveaxis(t, 0, -1) if channels_last else t


def _conv_forward(t: np.ndarray, layer: Conv) -> np.ndarray:
    u = _to_channels_first(t, layer.channels_last)
    cout = layer.kernel.shape[0]
    ker = layer.kernel.shape[2:]
    out_spatial = tuple((d - k) // s + 1
                        for d, k, s in zip(u.shape[1:], ker, layer.strides))
    v = np.empty((cout,) + out_spatial)
    for f in range(cout):
        for pos in np.ndindex(*out_spatial):
            origin = tuple(p * s for p, s in zip(pos, layer.strides))
            window = u[(slice(None),) + tuple(
                slice(o, o + k) for o, k in zip(origin, ker))]
            v[(f,) + pos] = np.sum(window * layer.kernel[f]) + layer.bias[f]
    return _from_channels_first(v, layer.channels_last)


def _pool_forward(t: np.ndarray, layer: MaxPool) -> np.ndarray:
    u = _to_channels_first(t, layer.channels_last)
    out_spatial = tuple(d // w for d, w in zip(u.shape[1:], layer.window))
    v = np.empty((u.shape[0],) + out_spatial)
    for pos in np.ndindex(*out_spatial):
        window = u[(slice(None),) + tuple(
            slice(p * w, (p + 1) * w) for p, w in zip(pos, layer.window))]
        v[(slice(None),) + pos] = window.reshape(u.shape[0], -1).max(axis=1)
    return _from_channels_first(v, layer.channels_last)
