"""High-level import flow: parse, convert, self-check, emit canonical JSON.

Every import is checked before anything is written: the converted
document's float inference must match the source runtime within 1e-5 per
logit on 10 seeded random inputs.  A manifest records the source, the
op mapping table, the check outcome, and the output digest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import modeljson
from .modeljson import ImportError_

ROUND_TRIP_TOL = 1e-5
ROUND_TRIP_INPUTS = 10


@dataclass
class ImportManifest:
    source: str
    source_format: str
    input_shape: list[int]
    mapping: list[dict]
    unsupported: list[str] = field(default_factory=list)
    output_digest: str | None = None
    round_trip_max_error: float | None = None

    def to_obj(self) -> dict:
        return {
            "source": self.source,
            "source_format": self.source_format,
            "input_shape": self.input_shape,
            "layer_mapping": self.mapping,
            "unsupported_ops": self.unsupported,
            "output_digest": self.output_digest,
            "round_trip_max_error": self.round_trip_max_error,
            "round_trip_inputs": ROUND_TRIP_INPUTS,
            "round_trip_tolerance": ROUND_TRIP_TOL,
        }


def _self_check(doc: dict, source_eval, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(ROUND_TRIP_INPUTS):
        x = rng.uniform(0.0, 1.0, size=doc["input_shape"]).astype(np.float32).astype(np.float64)
        imported = modeljson.evaluate(doc, x)
        source = source_eval(x)
        if imported.shape != source.shape:
            raise ImportError_(
                f"self-check: output length {imported.size} != source {source.size}"
            )
        worst = max(worst, float(np.abs(imported - source).max()))
    if worst > ROUND_TRIP_TOL:
        raise ImportError_(
            f"self-check failed: max logit deviation {worst:.3e} exceeds {ROUND_TRIP_TOL}"
        )
    return worst


def _detect_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix == ".onnx":
        return "onnx"
    if suffix in (".pt", ".pth", ".ckpt"):
        return "torch"
    head = path.read_bytes()[:2]
    return "torch" if head == b"PK" else "onnx"  # torch saves are zip archives


def import_model(source: Path | str, input_shape=None) -> tuple[bytes, ImportManifest]:
    """Convert a source model file; returns (canonical JSON bytes, manifest)."""
    path = Path(source)
    if not path.is_file():
        raise ImportError_(f"source {path} not found")
    source_format = _detect_format(path)

    try:
        if source_format == "onnx":
            from .onnx_import import evaluate_source, import_onnx_bytes

            doc, mapping, graph = import_onnx_bytes(path.read_bytes())
            worst = _self_check(doc, lambda x: evaluate_source(graph, x))
        else:
            from .torch_import import convert_module, evaluate_source, load_checkpoint

            if input_shape is None:
                raise ImportError_("checkpoint imports need --input-shape (e.g. 3,32,32)")
            module = load_checkpoint(path)
            doc, mapping = convert_module(module, input_shape)
            worst = _self_check(doc, lambda x: evaluate_source(module, x))
    except ImportError_ as exc:
        raise ImportError_(f"{path.name}: {exc}") from exc

    modeljson.shape_check(doc)
    data = modeljson.serialize(doc)
    manifest = ImportManifest(
        source=str(path),
        source_format=source_format,
        input_shape=[int(d) for d in doc["input_shape"]],
        mapping=mapping,
        output_digest=modeljson.digest(doc),
        round_trip_max_error=worst,
    )
    return data, manifest


def generate_lenet(seed: int) -> tuple[bytes, ImportManifest]:
    doc = modeljson.random_lenet(seed)
    modeljson.shape_check(doc)
    manifest = ImportManifest(
        source=f"seed:{seed}",
        source_format="generated",
        input_shape=[3, 32, 32],
        mapping=[{"node": str(i), "op": "generated", "kind": spec["kind"]}
                 for i, spec in enumerate(doc["layers"])],
        output_digest=modeljson.digest(doc),
    )
    return modeljson.serialize(doc), manifest


def write_outputs(data: bytes, manifest: ImportManifest, out: Path | str) -> Path:
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(data)
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest.to_obj(), indent=2, sort_keys=True))
    return out_path
