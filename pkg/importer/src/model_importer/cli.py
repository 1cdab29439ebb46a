"""Command line: import a source model, or generate a seeded reference model."""

from __future__ import annotations

import argparse
import sys

from .importer import generate_lenet, import_model, write_outputs
from .modeljson import ImportError_


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="model-importer",
        description="Convert ONNX files or PyTorch checkpoints into model JSON.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert a source model file")
    p.add_argument("--in", dest="source", required=True, help="source .onnx/.pt file")
    p.add_argument("--out", required=True, help="output model JSON path")
    p.add_argument("--input-shape", help="input dims for checkpoints, e.g. 3,32,32")

    p = sub.add_parser("gen-lenet", help="emit a seeded random reference model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model JSON path")

    args = parser.parse_args(argv)
    try:
        if args.command == "import":
            shape = None
            if args.input_shape:
                shape = [int(v) for v in args.input_shape.split(",")]
            data, manifest = import_model(args.source, input_shape=shape)
        else:
            data, manifest = generate_lenet(args.seed)
        out_path = write_outputs(data, manifest, args.out)
    except (ImportError_, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out_path} (digest {manifest.output_digest[:16]}...)")
    if manifest.round_trip_max_error is not None:
        print(f"round-trip max logit deviation: {manifest.round_trip_max_error:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
