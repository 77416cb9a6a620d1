"""Model conversion entry point with a built-in fidelity self-check."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import native
from .keras_reader import read_keras
from .lowering import lower_model
from .model_ir import SequentialModel, UnsupportedModelError
from .model_ir import evaluate as ir_evaluate
from .onnx_reader import read_onnx

SELF_CHECK_TOL = 1e-4
SELF_CHECK_INPUTS = 50


class ConversionError(RuntimeError):
    """The converted network disagrees with the source model."""


@dataclass(frozen=True)
class ConversionReport:
    source: str
    out_path: str
    layer_count: int
    neuron_count: int
    max_deviation: float


def read_model(path: str | Path) -> SequentialModel:
    suffix = Path(path).suffix.lower()
    if suffix in (".h5", ".keras", ".hdf5"):
        return read_keras(path)
    if suffix == ".onnx":
        return read_onnx(path)
    raise UnsupportedModelError(
        f"cannot tell the model format of {path!r} from its suffix; "
        f"expected .h5/.keras or .onnx")


def _source_forward(path: Path, model: SequentialModel):
    """Forward-pass oracle: the source framework itself for Keras models,
    the reference interpreter over the parsed operators for ONNX."""
    if path.suffix.lower() == ".onnx":
        return lambda x: ir_evaluate(model, x)
    from tensorflow import keras  # deferred: heavy import

    source = keras.models.load_model(path, compile=False)

    def run(x: np.ndarray) -> np.ndarray:
        batch = x.reshape((1,) + model.input_shape).astype(np.float32)
        return np.asarray(source(batch)).reshape(-1)

    return run


def convert_model(input_model_path: str | Path, out_path: str | Path,
                  seed: int = 0) -> ConversionReport:
    """Translate a model file into the native network format.

    Before writing, the lowered network is replayed on random inputs and
    compared against the source model's own forward pass; a deviation above
    ``SELF_CHECK_TOL`` aborts the conversion.
    """
    input_model_path = Path(input_model_path)
    model = read_model(input_model_path)
    records = lower_model(model)
    oracle = _source_forward(input_model_path, model)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(SELF_CHECK_INPUTS):
        x = rng.uniform(-1.0, 1.0, model.input_shape)
        got = native.evaluate(records, x.reshape(-1))
        want = oracle(x)
        worst = max(worst, float(np.max(np.abs(got - want), initial=0.0)))
        if worst > SELF_CHECK_TOL:
            raise ConversionError(
                f"converted network deviates from the source model by "
                f"{worst:.3g} (> {SELF_CHECK_TOL:g})")
    native.write_network(records, out_path, name=model.name)
    return ConversionReport(
        source=str(input_model_path), out_path=str(out_path),
        layer_count=len(records),
        neuron_count=sum(native.layer_size(r) for r in records),
        max_deviation=worst)
