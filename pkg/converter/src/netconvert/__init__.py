"""Converter from mainstream sequential CNN model formats (Keras H5, ONNX)
into the verification toolkit's native network and dataset text formats."""

from .convert import (ConversionError, ConversionReport, convert_model,
                      read_model)
from .datasets import DatasetError, export_dataset
from .lowering import lower_model
from .model_ir import (Conv, Dense, Flatten, MaxPool, Relu, SequentialModel,
                       UnsupportedModelError)

__version__ = "0.1.0"

__all__ = [
    "Conv", "ConversionError", "ConversionReport", "DatasetError", "Dense",
    "Flatten", "MaxPool", "Relu", "SequentialModel", "UnsupportedModelError",
    "convert_model", "export_dataset", "lower_model", "read_model",
    "__version__",
]
