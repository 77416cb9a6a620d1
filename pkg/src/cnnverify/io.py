"""Versioned text formats: networks, queries, datasets, bounds, results.

Floats are written with ``repr`` so every file round-trips bit-exactly.
All formats start with a ``<kind>-format <version>`` header line; ``#``
starts a comment; blank lines are ignored.

Network file layout::

    network-format 1
    name <name>
    layer input shape 5
    layer conv shape 4 bias 0.2 kernel 1.0 -1.3
    layer relu shape 4
    layer maxpool shape 2 pool 2
    layer ws shape 2 [tag conv]
      bias 5.0 -3.0
      w 0 0 2.0          # row col value, zero entries omitted
    layer output shape 4
      ...

Query file layout::

    query-format 1
    network <path relative to this file>
    input 0 0.5 1.0
    output-constraint -1.0 0:1.0 1:-1.0   # constant then index:coeff, read as sum <= 0

Dataset file layout::

    dataset-format 1
    samples 2 inputs 5 classes 10
    0.0 0.25 1.0 0.5 0.0 7        # n floats then the label
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bounds import Bounds
from .lp import LinearExpr
from .network import (ConvolutionLayer, InputLayer, LayerShape, MaxPoolLayer,
                      Network, OutputLayer, ReluLayer, WeightedSumLayer)
from .policies import TestSet
from .query import VerificationQuery

FORMAT_VERSION = 1


class FileFormatError(ValueError):
    """A file does not match its declared format."""


def _lines(path: Path) -> list[list[str]]:
    out = []
    for raw in path.read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def _expect_header(lines: list[list[str]], kind: str):
    if not lines or lines[0] != [f"{kind}-format", str(FORMAT_VERSION)]:
        raise FileFormatError(f"missing or bad header; expected "
                              f"'{kind}-format {FORMAT_VERSION}'")


def _shape_of(tokens: list[str]) -> LayerShape:
    return LayerShape(tuple(int(t) for t in tokens))


def write_network(net: Network, path: str | Path):
    if net.promoted or net.pruned:
        raise ValueError("only concrete networks are written to files")
    lines = [f"network-format {FORMAT_VERSION}", f"name {net.name}"]
    for layer in net.layers:
        shape = " ".join(str(d) for d in layer.shape.dims)
        if isinstance(layer, InputLayer):
            lines.append(f"layer input shape {shape}")
        elif isinstance(layer, ConvolutionLayer):
            kernel = " ".join(repr(float(k)) for k in layer.kernel)
            lines.append(f"layer conv shape {shape} bias {float(layer.bias)!r} kernel {kernel}")
        elif isinstance(layer, ReluLayer):
            lines.append(f"layer relu shape {shape}")
        elif isinstance(layer, MaxPoolLayer):
            lines.append(f"layer maxpool shape {shape} pool {layer.pool_size}")
        elif isinstance(layer, WeightedSumLayer):
            kind = "output" if isinstance(layer, OutputLayer) else "ws"
            tag = f" tag {layer.tag}" if layer.tag else ""
            lines.append(f"layer {kind} shape {shape}{tag}")
            lines.append("  bias " + " ".join(repr(float(b)) for b in layer.bias))
            for r, c in zip(*np.nonzero(layer.weights)):
                lines.append(f"  w {r} {c} {float(layer.weights[r, c])!r}")
        else:
            raise ValueError(f"cannot serialize layer kind {layer.kind}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_network(path: str | Path) -> Network:
    lines = _lines(Path(path))
    _expect_header(lines, "network")
    name = "net"
    layers = []
    pending = None  # (cls, shape, tag, bias list, weight triples)

    def flush():
        nonlocal pending
        if pending is None:
            return
        cls, shape, tag, bias, triples = pending
        prev = layers[-1].size
        w = np.zeros((shape.size, prev))
        for r, c, val in triples:
            w[r, c] = val
        kwargs = {} if cls is OutputLayer else {"tag": tag}
        layers.append(cls(shape=shape, weights=w, bias=np.array(bias), **kwargs))
        pending = None

    for tokens in lines[1:]:
        if tokens[0] == "name":
            name = tokens[1]
        elif tokens[0] == "layer":
            flush()
            kind = tokens[1]
            if tokens[2] != "shape":
                raise FileFormatError(f"expected 'shape' after layer kind, got {tokens}")
            rest = tokens[3:]
            if kind == "input":
                layers.append(InputLayer(_shape_of(rest)))
            elif kind == "relu":
                layers.append(ReluLayer(_shape_of(rest)))
            elif kind == "maxpool":
                i = rest.index("pool")
                layers.append(MaxPoolLayer(_shape_of(rest[:i]), pool_size=int(rest[i + 1])))
            elif kind == "conv":
                i = rest.index("bias")
                j = rest.index("kernel")
                layers.append(ConvolutionLayer(
                    _shape_of(rest[:i]), kernel=np.array([float(t) for t in rest[j + 1:]]),
                    bias=float(rest[i + 1])))
            elif kind in ("ws", "output"):
                tag = None
                if "tag" in rest:
                    i = rest.index("tag")
                    tag = rest[i + 1]
                    rest = rest[:i]
                pending = (OutputLayer if kind == "output" else WeightedSumLayer,
                           _shape_of(rest), tag, [], [])
            else:
                raise FileFormatError(f"unknown layer kind {kind!r}")
        elif tokens[0] == "bias" and pending is not None:
            pending[3].extend(float(t) for t in tokens[1:])
        elif tokens[0] == "w" and pending is not None:
            pending[4].append((int(tokens[1]), int(tokens[2]), float(tokens[3])))
        else:
            raise FileFormatError(f"unexpected line {' '.join(tokens)!r}")
    flush()
    return Network(layers=tuple(layers), name=name)


def write_query(query: VerificationQuery, path: str | Path, network_path: str | Path):
    """The network itself lives in its own file, referenced by (relative) path."""
    lines = [f"query-format {FORMAT_VERSION}", f"network {network_path}"]
    for i in range(query.network.input_size):
        lines.append(f"input {i} {float(query.input_lo[i])!r} {float(query.input_hi[i])!r}")
    for expr in query.output_constraints:
        terms = " ".join(f"{i}:{float(c)!r}" for i, c in sorted(expr.coeffs.items()))
        lines.append(f"output-constraint {float(expr.constant)!r} {terms}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def read_query(path: str | Path) -> VerificationQuery:
    path = Path(path)
    lines = _lines(path)
    _expect_header(lines, "query")
    net = None
    box = {}
    constraints = []
    for tokens in lines[1:]:
        if tokens[0] == "network":
            net_path = Path(tokens[1])
            if not net_path.is_absolute():
                net_path = path.parent / net_path
            net = read_network(net_path)
        elif tokens[0] == "input":
            box[int(tokens[1])] = (float(tokens[2]), float(tokens[3]))
        elif tokens[0] == "output-constraint":
            coeffs = {}
            for term in tokens[2:]:
                idx, coeff = term.split(":")
                coeffs[int(idx)] = coeffs.get(int(idx), 0.0) + float(coeff)
            constraints.append(LinearExpr(coeffs, float(tokens[1])))
        else:
            raise FileFormatError(f"unexpected line {' '.join(tokens)!r}")
    if net is None:
        raise FileFormatError("query file names no network")
    if set(box) != set(range(net.input_size)):
        raise FileFormatError("query must bound every input exactly once")
    lo = np.array([box[i][0] for i in range(net.input_size)])
    hi = np.array([box[i][1] for i in range(net.input_size)])
    return VerificationQuery(net, lo, hi, tuple(constraints))


def write_dataset(test_set: TestSet, path: str | Path):
    n = test_set.samples.shape[1] if len(test_set) else 0
    lines = [f"dataset-format {FORMAT_VERSION}",
             f"samples {len(test_set)} inputs {n} classes {test_set.num_classes}"]
    for s, l in zip(test_set.samples, test_set.labels):
        lines.append(" ".join(repr(float(v)) for v in s) + f" {int(l)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path: str | Path) -> TestSet:
    lines = _lines(Path(path))
    _expect_header(lines, "dataset")
    hdr = lines[1]
    if hdr[0] != "samples" or hdr[2] != "inputs" or hdr[4] != "classes":
        raise FileFormatError(f"bad dataset header {' '.join(hdr)!r}")
    count, n, classes = int(hdr[1]), int(hdr[3]), int(hdr[5])
    rows = lines[2:]
    if len(rows) != count:
        raise FileFormatError(f"expected {count} rows, found {len(rows)}")
    samples = np.zeros((count, n))
    labels = np.zeros(count, dtype=int)
    for i, tokens in enumerate(rows):
        if len(tokens) != n + 1:
            raise FileFormatError(f"row {i} has {len(tokens)} fields, expected {n + 1}")
        samples[i] = [float(t) for t in tokens[:n]]
        labels[i] = int(tokens[n])
    return TestSet(samples, labels, classes)


def write_bounds(net: Network, bounds: Bounds, path: str | Path):
    """One line per neuron: layer index, flat index, lower, upper."""
    lines = [f"bounds-format {FORMAT_VERSION}"]
    for lid, layer in enumerate(net.layers):
        for idx in range(layer.size):
            lo, hi = bounds.get((lid, idx))
            lines.append(f"{lid} {idx} {float(lo)!r} {float(hi)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_results(result: dict, path: str | Path):
    payload = {"format_version": FORMAT_VERSION, **result}
    Path(path).write_text(json.dumps(payload, indent=2, default=_jsonify) + "\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)}")
