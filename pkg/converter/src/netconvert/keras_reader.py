"""Extraction of sequential models from Keras H5 / .keras files.

TensorFlow is imported lazily so that purely ONNX-based workflows do not
pay its startup cost.  Activation tensors in Keras are channels-last; the
lowering keeps that order, so flat vectors match ``Flatten``'s output.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .model_ir import (Conv, Dense, Flatten, MaxPool, Relu, SequentialModel,
                       UnsupportedModelError)


def read_keras(path: str | Path) -> SequentialModel:
    from tensorflow import keras  # deferred: heavy import

    source = keras.models.load_model(path, compile=False)
    layers: list = []
    for layer in source.layers:
        layers.extend(_translate(layer, keras))
    shape = source.input_shape
    if shape[0] not in (None, 1):
        raise UnsupportedModelError(f"unexpected batch dimension in {shape}")
    return SequentialModel(tuple(int(d) for d in shape[1:]), tuple(layers),
                           name=Path(path).stem)


def _activation(layer, keras) -> list:
    act = getattr(layer, "activation", None)
    if act is None or act is keras.activations.linear:
        return []
    if act is keras.activations.relu:
        return [Relu()]
    raise UnsupportedModelError(
        f"unsupported activation {getattr(act, '__name__', act)!r} "
        f"on layer {layer.name!r}")


def _translate(layer, keras) -> list:
    L = keras.layers
    if isinstance(layer, L.InputLayer):
        return []
    if isinstance(layer, (L.Conv1D, L.Conv2D)):
        if layer.padding != "valid":
            raise UnsupportedModelError(
                f"unsupported padding {layer.padding!r} on {layer.name!r}")
        kernel, bias = layer.get_weights()  # (*spatial, cin, cout)
        kernel = np.moveaxis(kernel, (-1, -2), (0, 1))  # -> (cout, cin, *sp)
        strides = tuple(int(s) for s in np.atleast_1d(layer.strides))
        conv = Conv(kernel=kernel.astype(float), bias=bias.astype(float),
                    strides=strides, channels_last=True)
        return [conv] + _activation(layer, keras)
    if isinstance(layer, (L.MaxPooling1D, L.MaxPooling2D)):
        window = tuple(int(p) for p in np.atleast_1d(layer.pool_size))
        strides = tuple(int(s) for s in np.atleast_1d(layer.strides))
        if strides != window:
            raise UnsupportedModelError(
                f"overlapping or gapped pooling (stride {strides}, window "
                f"{window}) on {layer.name!r} is not supported")
        return [MaxPool(window=window, channels_last=True)]
    if isinstance(layer, L.Flatten):
        return [Flatten()]
    if isinstance(layer, L.Dense):
        kernel, bias = layer.get_weights()  # (in, out)
        dense = Dense(weights=kernel.T.astype(float), bias=bias.astype(float))
        return [dense] + _activation(layer, keras)
    if isinstance(layer, (L.ReLU, L.Activation)):
        if isinstance(layer, L.ReLU):
            return [Relu()]
        return _activation(layer, keras) or []
    raise UnsupportedModelError(
        f"unsupported layer type {type(layer).__name__!r} ({layer.name!r})")
