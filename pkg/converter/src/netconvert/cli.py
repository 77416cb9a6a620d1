"""Command line interface: ``netconvert convert`` / ``netconvert export-dataset``."""

from __future__ import annotations

import argparse
import sys

from .convert import ConversionError, convert_model
from .datasets import DatasetError, export_dataset
from .model_ir import UnsupportedModelError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netconvert",
        description="Translate sequential CNN models (Keras H5 / ONNX) into "
                    "the verification toolkit's network format, and export "
                    "test sets into its dataset format.")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convert", help="convert a model file")
    conv.add_argument("model", help="source model (.h5, .keras or .onnx)")
    conv.add_argument("out", help="output path for the native network file")
    conv.add_argument("--seed", type=int, default=0,
                      help="seed for the self-check inputs (default 0)")

    data = sub.add_parser("export-dataset", help="export test samples")
    data.add_argument("name", help="'mnist' or a path to an .npz archive")
    data.add_argument("count", type=int, help="number of samples to export")
    data.add_argument("out", help="output path for the dataset file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            report = convert_model(args.model, args.out, seed=args.seed)
            print(f"wrote {report.out_path}: {report.layer_count} layers, "
                  f"{report.neuron_count} neurons, max self-check deviation "
                  f"{report.max_deviation:.3g}")
        else:
            written = export_dataset(args.name, args.count, args.out)
            print(f"wrote {args.out}: {written} samples")
    except (UnsupportedModelError, ConversionError, DatasetError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
