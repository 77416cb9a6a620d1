"""Lowering of the intermediate representation to native layer records.

Multi-channel / 2-D convolutions and strides become explicit sparse
weighted-sum layers that keep the original tensor shape, so downstream
spatial heuristics still see the real dimensions.  Pooling windows become a
0/1 reindexing layer (gathering each window into a contiguous run) followed
by 1-D non-overlapping pooling.  Plain 1-D single-channel cases map onto
the native convolution and pooling layers directly.
"""

from __future__ import annotations

import numpy as np

from .model_ir import (Conv, Dense, Flatten, MaxPool, Relu, SequentialModel,
                       UnsupportedModelError, _spatial_and_channels,
                       _with_spatial)


def _squeeze(shape: tuple[int, ...]) -> tuple[int, ...]:
    out = tuple(d for d in shape if d != 1)
    return out if out else (1,)


def lower_model(model: SequentialModel) -> list[dict]:
    """Translate a sequential model into native layer records."""
    records = [{"kind": "input", "shape": _squeeze(model.input_shape)}]
    shapes = model.layer_shapes()
    for layer, shape_in, shape_out in zip(model.layers, shapes, shapes[1:]):
        if isinstance(layer, Relu):
            records.append({"kind": "relu", "shape": _squeeze(shape_out)})
        elif isinstance(layer, Flatten):
            pass  # flat row-major order is the native order already
        elif isinstance(layer, Dense):
            records.append({"kind": "ws", "shape": (layer.weights.shape[0],),
                            "weights": np.asarray(layer.weights, dtype=float),
                            "bias": np.asarray(layer.bias, dtype=float),
                            "tag": None})
        elif isinstance(layer, Conv):
            records.append(_lower_conv(layer, shape_in, shape_out))
        elif isinstance(layer, MaxPool):
            records.extend(_lower_pool(layer, shape_in, shape_out))
        else:
            raise UnsupportedModelError(f"unknown layer {layer!r}")
    _finish_output(records)
    return records


def _finish_output(records: list[dict]):
    last = records[-1]
    if last["kind"] == "ws" and last["tag"] is None:
        last["kind"] = "output"
        return
    n = int(np.prod(last["shape"]))
    records.append({"kind": "output", "shape": (n,), "weights": np.eye(n),
                    "bias": np.zeros(n), "tag": None})


def _lower_conv(layer: Conv, shape_in, shape_out) -> dict:
    cout, cin, *ker = layer.kernel.shape
    if (len(ker) == 1 and cin == 1 and cout == 1 and layer.strides == (1,)):
        return {"kind": "conv", "shape": _squeeze(shape_out),
                "kernel": layer.kernel[0, 0].astype(float),
                "bias": float(layer.bias[0])}
    out_spatial, _ = _spatial_and_channels(shape_out, layer.channels_last)
    n_in = int(np.prod(shape_in))
    n_out = int(np.prod(shape_out))
    weights = np.zeros((n_out, n_in))
    bias = np.zeros(n_out)
    for f in range(cout):
        for pos in np.ndindex(*out_spatial):
            r = np.ravel_multi_index(
                _with_spatial(pos, f, layer.channels_last), shape_out)
            bias[r] = layer.bias[f]
            origin = tuple(p * s for p, s in zip(pos, layer.strides))
            for ci in range(cin):
                for kpos in np.ndindex(*ker):
                    src = tuple(o + k for o, k in zip(origin, kpos))
                    c = np.ravel_multi_index(
                        _with_spatial(src, ci, layer.channels_last), shape_in)
                    weights[r, c] += layer.kernel[(f, ci) + kpos]
    return {"kind": "ws", "shape": _squeeze(shape_out), "weights": weights,
            "bias": bias, "tag": "conv"}


def _lower_pool(layer: MaxPool, shape_in, shape_out) -> list[dict]:
    spatial_in, channels = _spatial_and_channels(shape_in, layer.channels_last)
    out_spatial, _ = _spatial_and_channels(shape_out, layer.channels_last)
    elems = int(np.prod(layer.window))
    n_in = int(np.prod(shape_in))
    n_out = int(np.prod(shape_out))
    if (len(spatial_in) == 1 and channels == 1
            and spatial_in[0] % layer.window[0] == 0):
        # flat order equals spatial order and windows are already contiguous
        return [{"kind": "maxpool", "shape": _squeeze(shape_out),
                 "pool": layer.window[0]}]
    gather = np.zeros((n_out * elems, n_in))
    for ch in range(channels):
        for pos in np.ndindex(*out_spatial):
            r = np.ravel_multi_index(
                _with_spatial(pos, ch, layer.channels_last), shape_out)
            for j, kpos in enumerate(np.ndindex(*layer.window)):
                src = tuple(p * w + k
                            for p, w, k in zip(pos, layer.window, kpos))
                c = np.ravel_multi_index(
                    _with_spatial(src, ch, layer.channels_last), shape_in)
                gather[r * elems + j, c] = 1.0
    return [{"kind": "ws", "shape": (n_out * elems,), "weights": gather,
             "bias": np.zeros(n_out * elems), "tag": "perm"},
            {"kind": "maxpool", "shape": _squeeze(shape_out), "pool": elems}]
