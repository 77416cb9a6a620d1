"""Shared fixtures: deterministic Keras models and a minimal ONNX encoder.

The package mirror carries neither ``onnx`` nor ``onnxruntime``, so ONNX
fixture files are assembled here by encoding the protobuf wire format
directly (the same field numbers the reader decodes, taken from
onnx.proto3).  Numerical ground truth for those fixtures comes from torch
modules built from the same weights, which keeps the oracle independent of
the converter's own code paths.
"""

from __future__ import annotations

import os
import struct

import numpy as np
import pytest

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "3")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# ------------------------------------------------------------- Keras models

def toy_keras_model():
    """1-D CNN with hand-picked weights; see the golden-output test."""
    from tensorflow import keras

    model = keras.Sequential([
        keras.layers.Input(shape=(5, 1)),
        keras.layers.Conv1D(1, 2, activation="relu"),
        keras.layers.MaxPooling1D(2),
        keras.layers.Flatten(),
        keras.layers.Dense(2),
        keras.layers.Dense(4),
    ], name="toy")
    model.layers[0].set_weights(
        [np.array([[[1.0]], [[-1.3]]]), np.array([0.2])])
    model.layers[3].set_weights(
        [np.array([[2.0, 3.0], [-1.0, 1.0]]), np.array([5.0, -3.0])])
    model.layers[4].set_weights(
        [np.array([[1.0, 0.0, 2.0, 0.0], [0.0, 3.0, -1.0, 1.0]]),
         np.array([10.0, 2.0, -12.0, 0.0])])
    return model


def sample_architecture(variant: str):
    """Desk-scale renditions of the three benchmark CNN shapes.

    A: two conv blocks (conv, relu, maxpool), single channel.
    B: the same sequence with two channels.
    C: three conv blocks, two channels.
    All end with a dense+relu block and a dense classifier head.
    """
    from tensorflow import keras

    L = keras.layers
    blocks = {
        "A": [(14, 1), (1, 3), (1, 3)],
        "B": [(14, 1), (2, 3), (2, 3)],
        "C": [(18, 1), (2, 3), (2, 3), (2, 2)],
    }[variant]
    (side, cin), *convs = blocks
    layers = [L.Input(shape=(side, side, cin))]
    for filters, k in convs:
        layers += [L.Conv2D(filters, k, activation="relu"), L.MaxPooling2D(2)]
    layers += [L.Flatten(), L.Dense(8, activation="relu"), L.Dense(4)]
    return keras.Sequential(layers, name=f"sample{variant}")


def keras_forward(model, x: np.ndarray) -> np.ndarray:
    batch = np.asarray(x, dtype=np.float32).reshape(
        (1,) + tuple(int(d) for d in model.input_shape[1:]))
    return np.asarray(model(batch)).reshape(-1)


# ------------------------------------------------------------- ONNX encoder

def _varint(n: int) -> bytes:
    out = bytearray()
    while True:
        byte = n & 0x7F
        n >>= 7
        if n:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _field(number: int, wire: int, payload: bytes) -> bytes:
    return _varint((number << 3) | wire) + payload


def _msg(number: int, payload: bytes) -> bytes:
    return _field(number, 2, _varint(len(payload)) + payload)


def _string(number: int, text: str) -> bytes:
    return _msg(number, text.encode())


def _enc_tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array, dtype=np.float32)
    body = b"".join(_field(1, 0, _varint(d)) for d in array.shape)
    body += _field(2, 0, _varint(1))  # data_type = FLOAT
    body += _string(8, name)
    body += _msg(9, array.tobytes())  # raw_data, little-endian float32
    return body


def _enc_attr_ints(name: str, ints: list[int]) -> bytes:
    body = _string(1, name)
    body += b"".join(_field(8, 0, _varint(i)) for i in ints)
    return body


def _enc_attr_i(name: str, i: int) -> bytes:
    return _string(1, name) + _field(3, 0, _varint(i))


def _enc_attr_f(name: str, f: float) -> bytes:
    return _string(1, name) + _field(2, 5, struct.pack("<f", f))


def _enc_node(op: str, inputs: list[str], outputs: list[str],
              attrs: list[bytes] = ()) -> bytes:
    body = b"".join(_string(1, name) for name in inputs)
    body += b"".join(_string(2, name) for name in outputs)
    body += _string(4, op)
    body += b"".join(_msg(5, a) for a in attrs)
    return body


def _enc_value_info(name: str, dims: list[int]) -> bytes:
    shape = b"".join(_msg(1, _field(1, 0, _varint(d))) for d in dims)
    tensor_type = _field(1, 0, _varint(1)) + _msg(2, shape)
    return _string(1, name) + _msg(2, _msg(1, tensor_type))


def encode_onnx_model(nodes: list[bytes],
                      initializers: dict[str, np.ndarray],
                      input_name: str, input_dims: list[int],
                      output_name: str) -> bytes:
    graph = b"".join(_msg(1, n) for n in nodes)
    graph += b"".join(_msg(5, _enc_tensor(k, v))
                      for k, v in initializers.items())
    graph += _msg(11, _enc_value_info(input_name, input_dims))
    graph += _msg(12, _enc_value_info(output_name, []))
    model = _field(1, 0, _varint(8))  # ir_version
    model += _msg(8, _string(1, "") + _field(2, 0, _varint(13)))  # opset 13
    model += _msg(7, graph)
    return model


def build_onnx_cnn(path, rng, *, channels=2, side=10, kernel=3,
                   hidden=6, outputs=3):
    """Conv -> Relu -> MaxPool -> Flatten -> Gemm -> Relu -> Gemm fixture.

    Returns the written weights so a torch oracle can be built from them.
    """
    conv_w = rng.normal(size=(channels, 1, kernel, kernel)) * 0.5
    conv_b = rng.normal(size=channels)
    pooled = (side - kernel + 1) // 2
    flat = channels * pooled * pooled
    fc1_w = rng.normal(size=(hidden, flat)) * 0.5
    fc1_b = rng.normal(size=hidden)
    fc2_w = rng.normal(size=(outputs, hidden)) * 0.5
    fc2_b = rng.normal(size=outputs)
    nodes = [
        _enc_node("Conv", ["x", "conv_w", "conv_b"], ["c"],
                  [_enc_attr_ints("strides", [1, 1]),
                   _enc_attr_ints("pads", [0, 0, 0, 0]),
                   _enc_attr_ints("kernel_shape", [kernel, kernel])]),
        _enc_node("Relu", ["c"], ["r1"]),
        _enc_node("MaxPool", ["r1"], ["p"],
                  [_enc_attr_ints("kernel_shape", [2, 2]),
                   _enc_attr_ints("strides", [2, 2])]),
        _enc_node("Flatten", ["p"], ["f"], [_enc_attr_i("axis", 1)]),
        _enc_node("Gemm", ["f", "fc1_w", "fc1_b"], ["g1"],
                  [_enc_attr_i("transB", 1), _enc_attr_f("alpha", 1.0),
                   _enc_attr_f("beta", 1.0)]),
        _enc_node("Relu", ["g1"], ["r2"]),
        _enc_node("Gemm", ["r2", "fc2_w", "fc2_b"], ["y"],
                  [_enc_attr_i("transB", 1)]),
    ]
    weights = {"conv_w": conv_w, "conv_b": conv_b, "fc1_w": fc1_w,
               "fc1_b": fc1_b, "fc2_w": fc2_w, "fc2_b": fc2_b}
    blob = encode_onnx_model(nodes, weights, "x", [1, 1, side, side], "y")
    path.write_bytes(blob)
    return weights


def torch_oracle(weights: dict[str, np.ndarray]):
    """Torch module matching :func:`build_onnx_cnn`'s fixture."""
    import torch
    from torch import nn

    channels, _, kernel, _ = weights["conv_w"].shape
    model = nn.Sequential(
        nn.Conv2d(1, channels, kernel), nn.ReLU(), nn.MaxPool2d(2),
        nn.Flatten(),
        nn.Linear(*weights["fc1_w"].shape[::-1]), nn.ReLU(),
        nn.Linear(*weights["fc2_w"].shape[::-1]))
    with torch.no_grad():
        model[0].weight.copy_(torch.from_numpy(weights["conv_w"]))
        model[0].bias.copy_(torch.from_numpy(weights["conv_b"]))
        model[4].weight.copy_(torch.from_numpy(weights["fc1_w"]))
        model[4].bias.copy_(torch.from_numpy(weights["fc1_b"]))
        model[6].weight.copy_(torch.from_numpy(weights["fc2_w"]))
        model[6].bias.copy_(torch.from_numpy(weights["fc2_b"]))

    def run(x: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            t = torch.from_numpy(
                np.asarray(x, dtype=np.float32).reshape(1, 1, *x.shape[-2:]))
            return model(t).numpy().reshape(-1)

    return run
