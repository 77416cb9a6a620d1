"""Export of test-set slices into the toolkit's dataset format.

A dataset name is either

- a path to an ``.npz`` archive with arrays ``samples`` (or ``x``) and
  ``labels`` (or ``y``), or
- ``"mnist"``, served through ``tensorflow.keras.datasets`` (uses the local
  Keras cache; needs one-time download otherwise).

Integer-typed images are rescaled to [0, 1].
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import native


class DatasetError(ValueError):
    """The requested dataset cannot be loaded."""


def _load(name: str) -> tuple[np.ndarray, np.ndarray, int | None]:
    if name.lower() == "mnist":
        from tensorflow import keras  # deferred: heavy import

        (_, _), (samples, labels) = keras.datasets.mnist.load_data()
        return samples, labels, 10
    path = Path(name)
    if path.suffix == ".npz" and path.exists():
        archive = np.load(path)
        try:
            samples = archive["samples"] if "samples" in archive else archive["x"]
            labels = archive["labels"] if "labels" in archive else archive["y"]
        except KeyError as exc:
            raise DatasetError(
                f"{name!r} lacks samples/x and labels/y arrays") from exc
        classes = int(archive["classes"]) if "classes" in archive else None
        return samples, labels, classes
    raise DatasetError(f"unknown dataset {name!r}; "
                       f"expected 'mnist' or a path to an .npz archive")


def export_dataset(dataset_name: str, count: int, out_path: str | Path) -> int:
    """Write the first ``count`` test samples in the native dataset format.

    Returns the number of samples written (``count``, or fewer when the
    source holds fewer samples).
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    samples, labels, classes = _load(dataset_name)
    if len(samples) != len(labels):
        raise DatasetError(f"{dataset_name!r} has {len(samples)} samples "
                           f"but {len(labels)} labels")
    samples = np.asarray(samples)[:count]
    labels = np.asarray(labels)[:count].astype(int)
    if np.issubdtype(samples.dtype, np.integer):
        samples = samples / 255.0
    if classes is None:
        classes = int(labels.max(initial=0)) + 1
    native.write_dataset(samples, labels, classes, out_path)
    return len(labels)
