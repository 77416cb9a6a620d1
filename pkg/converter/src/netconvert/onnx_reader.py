"""Extraction of sequential models from ONNX files.

ONNX files are protobuf messages; only a small, fixed subset of the schema
is needed here (graph, nodes, initializers, input shapes), so this module
decodes the protobuf wire format directly instead of depending on the onnx
package.  Field numbers follow onnx.proto3.  Activation tensors in ONNX are
channels-first; the lowering keeps that order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model_ir import (Conv, Dense, Flatten, MaxPool, Relu, SequentialModel,
                       UnsupportedModelError)


class OnnxFormatError(ValueError):
    """The file is not a readable ONNX model."""


# ---------------------------------------------------------------- wire format

def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = shift = 0
    while True:
        if pos >= len(buf):
            raise OnnxFormatError("truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def _fields(buf: bytes):
    """Yield (field_number, wire_type, value) triples of one message."""
    pos = 0
    while pos < len(buf):
        key, pos = _read_varint(buf, pos)
        number, wire = key >> 3, key & 7
        if wire == 0:  # varint
            value, pos = _read_varint(buf, pos)
        elif wire == 1:  # fixed64
            value = buf[pos:pos + 8]
            pos += 8
        elif wire == 2:  # length-delimited
            length, pos = _read_varint(buf, pos)
            value = buf[pos:pos + length]
            pos += length
        elif wire == 5:  # fixed32
            value = buf[pos:pos + 4]
            pos += 4
        else:
            raise OnnxFormatError(f"unsupported wire type {wire}")
        yield number, wire, value


def _signed(value: int) -> int:
    """Interpret a varint as a two's-complement int64."""
    return value - (1 << 64) if value >= 1 << 63 else value


def _packed_varints(value, wire) -> list[int]:
    if wire == 0:
        return [_signed(value)]
    out, pos = [], 0
    while pos < len(value):
        v, pos = _read_varint(value, pos)
        out.append(_signed(v))
    return out


# ------------------------------------------------------------ schema subset

@dataclass
class _Attr:
    name: str = ""
    i: int = 0
    f: float = 0.0
    ints: list[int] = field(default_factory=list)


@dataclass
class _Node:
    op_type: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    attrs: dict[str, _Attr] = field(default_factory=dict)


def _parse_attr(buf: bytes) -> _Attr:
    attr = _Attr()
    for number, wire, value in _fields(buf):
        if number == 1:
            attr.name = value.decode()
        elif number == 2:
            attr.f = struct.unpack("<f", value)[0]
        elif number == 3:
            attr.i = _signed(value)
        elif number == 8:
            attr.ints.extend(_packed_varints(value, wire))
    return attr


def _parse_node(buf: bytes) -> _Node:
    node = _Node()
    for number, wire, value in _fields(buf):
        if number == 1:
            node.inputs.append(value.decode())
        elif number == 2:
            node.outputs.append(value.decode())
        elif number == 4:
            node.op_type = value.decode()
        elif number == 5:
            attr = _parse_attr(value)
            node.attrs[attr.name] = attr
    return node


_FLOAT32, _FLOAT64, _INT64 = 1, 11, 7


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    dtype = _FLOAT32
    name = ""
    floats: list[float] = []
    ints: list[int] = []
    raw = b""
    for number, wire, value in _fields(buf):
        if number == 1:
            dims.extend(_packed_varints(value, wire))
        elif number == 2:
            dtype = value
        elif number == 4:
            floats.extend(struct.unpack(f"<{len(value) // 4}f", value)
                          if wire == 2 else struct.unpack("<f", value))
        elif number == 7:
            ints.extend(_packed_varints(value, wire))
        elif number == 8:
            name = value.decode()
        elif number == 9:
            raw = value
    if raw:
        np_dtype = {_FLOAT32: "<f4", _FLOAT64: "<f8", _INT64: "<i8"}.get(dtype)
        if np_dtype is None:
            raise OnnxFormatError(f"unsupported tensor data type {dtype}")
        data = np.frombuffer(raw, dtype=np_dtype).astype(float)
    elif floats:
        data = np.array(floats)
    else:
        data = np.array(ints, dtype=float)
    return name, data.reshape(dims)


def _parse_value_info(buf: bytes) -> tuple[str, list[int]]:
    name = ""
    dims: list[int] = []
    for number, _, value in _fields(buf):
        if number == 1:
            name = value.decode()
        elif number == 2:  # TypeProto
            for n2, _, tensor_type in _fields(value):
                if n2 != 1:
                    continue
                for n3, _, shape in _fields(tensor_type):
                    if n3 != 2:
                        continue
                    for n4, _, dim in _fields(shape):
                        if n4 != 1:
                            continue
                        dim_value = 0
                        for n5, _, v5 in _fields(dim):
                            if n5 == 1:
                                dim_value = _signed(v5)
                        dims.append(dim_value)
    return name, dims


@dataclass
class _Graph:
    nodes: list[_Node] = field(default_factory=list)
    initializers: dict[str, np.ndarray] = field(default_factory=dict)
    inputs: dict[str, list[int]] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)


def _parse_graph(buf: bytes) -> _Graph:
    g = _Graph()
    for number, _, value in _fields(buf):
        if number == 1:
            g.nodes.append(_parse_node(value))
        elif number == 5:
            name, tensor = _parse_tensor(value)
            g.initializers[name] = tensor
        elif number == 11:
            name, dims = _parse_value_info(value)
            g.inputs[name] = dims
        elif number == 12:
            name, _dims = _parse_value_info(value)
            g.outputs.append(name)
    return g


def _parse_model(buf: bytes) -> _Graph:
    graph = None
    for number, _, value in _fields(buf):
        if number == 7:
            graph = _parse_graph(value)
    if graph is None:
        raise OnnxFormatError("file contains no model graph")
    return graph


# ------------------------------------------------------------- graph -> IR

def read_onnx(path: str | Path) -> SequentialModel:
    graph = _parse_model(Path(path).read_bytes())
    data_inputs = [n for n in graph.inputs if n not in graph.initializers]
    if len(data_inputs) != 1:
        raise UnsupportedModelError(
            f"expected one data input, found {data_inputs}")
    entry = data_inputs[0]
    dims = graph.inputs[entry]
    input_shape = tuple(int(d) for d in dims[1:])  # drop the batch dim
    if not input_shape or any(d <= 0 for d in input_shape):
        raise UnsupportedModelError(f"cannot read input shape from {dims}")

    layers: list = []
    current = entry
    remaining = list(graph.nodes)
    while remaining:
        node = _next_node(remaining, current)
        layers.extend(_translate(node, graph))
        current = node.outputs[0]
    if graph.outputs and current not in graph.outputs:
        raise UnsupportedModelError("model graph is not a single chain")
    return SequentialModel(input_shape, tuple(layers), name=Path(path).stem)


def _next_node(remaining: list[_Node], current: str) -> _Node:
    for node in remaining:
        if current in node.inputs:
            remaining.remove(node)
            return node
    raise UnsupportedModelError(
        f"model graph is not a single chain (no consumer of {current!r})")


def _init(graph: _Graph, name: str) -> np.ndarray:
    if name not in graph.initializers:
        raise UnsupportedModelError(
            f"expected constant weights, {name!r} is computed at runtime")
    return graph.initializers[name].astype(float)


def _attr_ints(node: _Node, name: str, default: list[int]) -> list[int]:
    return list(node.attrs[name].ints) if name in node.attrs else default


def _translate(node: _Node, graph: _Graph) -> list:
    op = node.op_type
    if op == "Relu":
        return [Relu()]
    if op in ("Flatten", "Reshape"):
        if op == "Flatten" and node.attrs.get("axis", _Attr(i=1)).i != 1:
            raise UnsupportedModelError("only batch-flattening is supported")
        return [Flatten()]
    if op == "Conv":
        kernel = _init(graph, node.inputs[1])  # (cout, cin, *spatial)
        bias = (_init(graph, node.inputs[2]) if len(node.inputs) > 2
                else np.zeros(kernel.shape[0]))
        n_spatial = kernel.ndim - 2
        if any(_attr_ints(node, "pads", [0] * 2 * n_spatial)):
            raise UnsupportedModelError(
                f"padded convolution {node.op_type!r} is not supported")
        if node.attrs.get("group", _Attr(i=1)).i != 1:
            raise UnsupportedModelError("grouped convolution is not supported")
        if any(d != 1 for d in _attr_ints(node, "dilations", [1] * n_spatial)):
            raise UnsupportedModelError("dilated convolution is not supported")
        strides = tuple(_attr_ints(node, "strides", [1] * n_spatial))
        return [Conv(kernel=kernel, bias=bias, strides=strides,
                     channels_last=False)]
    if op == "MaxPool":
        window = tuple(_attr_ints(node, "kernel_shape", []))
        strides = tuple(_attr_ints(node, "strides", list(window)))
        pads = _attr_ints(node, "pads", [0] * 2 * len(window))
        if strides != window or any(pads):
            raise UnsupportedModelError(
                "only unpadded pooling with stride equal to the window "
                "is supported")
        return [MaxPool(window=window, channels_last=False)]
    if op == "Gemm":
        if (node.attrs.get("alpha", _Attr(f=1.0)).f != 1.0
                or node.attrs.get("beta", _Attr(f=1.0)).f != 1.0
                or node.attrs.get("transA", _Attr(i=0)).i != 0):
            raise UnsupportedModelError("general Gemm forms are not supported")
        weights = _init(graph, node.inputs[1])
        if node.attrs.get("transB", _Attr(i=0)).i == 0:
            weights = weights.T  # normalize to (out, in)
        bias = (_init(graph, node.inputs[2]) if len(node.inputs) > 2
                else np.zeros(weights.shape[0]))
        return [Dense(weights=weights, bias=bias.reshape(-1))]
    raise UnsupportedModelError(f"unsupported layer type {op!r}")
