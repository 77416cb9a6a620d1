"""Emission of the verifier's text formats, plus an independent evaluator.

The converter talks to the verification toolkit only through these files,
so the format knowledge is duplicated here on purpose.  A native network is
represented as a list of layer records (plain dicts):

    {"kind": "input",   "shape": (...)}
    {"kind": "conv",    "shape": (...), "kernel": 1-D array, "bias": float}
    {"kind": "relu",    "shape": (...)}
    {"kind": "maxpool", "shape": (...), "pool": int}
    {"kind": "ws" | "output", "shape": (...), "weights": 2-D array,
     "bias": 1-D array, "tag": None | "conv" | "perm"}

Shapes may be multi-dimensional; a layer's neuron count is their product.
Floats are written with ``repr`` so files round-trip bit-exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def layer_size(record: dict) -> int:
    return int(np.prod(record["shape"]))


def write_network(records: list[dict], path: str | Path, name: str = "net"):
    lines = [f"network-format {FORMAT_VERSION}", f"name {name}"]
    for rec in records:
        shape = " ".join(str(int(d)) for d in rec["shape"])
        kind = rec["kind"]
        if kind == "input" or kind == "relu":
            lines.append(f"layer {kind} shape {shape}")
        elif kind == "conv":
            kernel = " ".join(repr(float(k)) for k in rec["kernel"])
            lines.append(f"layer conv shape {shape} "
                         f"bias {float(rec['bias'])!r} kernel {kernel}")
        elif kind == "maxpool":
            lines.append(f"layer maxpool shape {shape} pool {int(rec['pool'])}")
        elif kind in ("ws", "output"):
            tag = f" tag {rec['tag']}" if rec.get("tag") else ""
            lines.append(f"layer {kind} shape {shape}{tag}")
            lines.append("  bias " +
                         " ".join(repr(float(b)) for b in rec["bias"]))
            w = rec["weights"]
            for r, c in zip(*np.nonzero(w)):
                lines.append(f"  w {r} {c} {float(w[r, c])!r}")
        else:
            raise ValueError(f"unknown native layer kind {kind!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_dataset(samples: np.ndarray, labels: np.ndarray, num_classes: int,
                  path: str | Path):
    samples = np.asarray(samples, dtype=float)
    n = int(np.prod(samples.shape[1:])) if len(labels) else 0
    samples = samples.reshape(len(labels), n)
    lines = [f"dataset-format {FORMAT_VERSION}",
             f"samples {len(labels)} inputs {n} classes {int(num_classes)}"]
    for s, label in zip(samples, labels):
        lines.append(" ".join(repr(float(v)) for v in s) + f" {int(label)}")
    Path(path).write_text("\n".join(lines) + "\n")


def evaluate(records: list[dict], x: np.ndarray) -> np.ndarray:
    """Forward pass over native layer records (flat vectors throughout)."""
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.size != layer_size(records[0]):
        raise ValueError(f"input has {v.size} entries, "
                         f"network expects {layer_size(records[0])}")
    for rec in records[1:]:
        kind = rec["kind"]
        if kind == "relu":
            v = np.maximum(v, 0.0)
        elif kind == "conv":
            k = np.asarray(rec["kernel"], dtype=float)
            v = np.array([float(k @ v[i:i + k.size]) + rec["bias"]
                          for i in range(v.size - k.size + 1)])
        elif kind == "maxpool":
            p = int(rec["pool"])
            v = v.reshape(-1, p).max(axis=1)
        elif kind in ("ws", "output"):
            v = rec["weights"] @ v + rec["bias"]
        else:
            raise ValueError(f"unknown native layer kind {kind!r}")
        if v.size != layer_size(rec):
            raise AssertionError(
                f"layer {kind} produced {v.size} values, "
                f"declared shape {rec['shape']}")
    return v
