"""Chain-structured model graphs: parsing, validation, shape inference, slicing.

Model JSON format
-----------------
``{"input_shape": [...], "layers": [...], "weights": {...}}``

Each layer is ``{"kind": k, "params": {...}, "weight_ref": ref}`` where
``weight_ref`` appears exactly for parameterized kinds (conv2d, linear).
A layer's parameters live in the weight store under the compound keys
``"<ref>.weight"`` and ``"<ref>.bias"``.  Each store entry is
``{"shape": [...], "dtype": "f32", "data_b64": ...}`` with values encoded
as little-endian IEEE-754 32-bit floats, or, instead of ``data_b64``, a
sidecar reference ``{"file": name, "offset": o, "length": l}``.  An
optional ``sha256`` field per entry is verified on parse.

SHA-256 digests over the canonical serialized form (sorted keys, compact
separators) identify models; raw weight bytes identify weight tensors.
"""

from __future__ import annotations

import base64
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ModelFormatError, PlanError, ShapeError
from .tensor import FloatTensor, Tensor, conv2d, flatten, linear, maxpool2d, relu

LAYER_KINDS = ("conv2d", "relu", "maxpool2d", "flatten", "linear")
_PARAM_KEYS = {
    "conv2d": ("in_channels", "out_channels", "kernel", "stride"),
    "relu": (),
    "maxpool2d": ("window",),
    "flatten": (),
    "linear": ("in_features", "out_features"),
}
PARAMETERIZED_KINDS = ("conv2d", "linear")


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a chain model."""

    kind: str
    params: Mapping[str, int] = field(default_factory=dict)
    weight_ref: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ModelFormatError(f"unknown layer kind {self.kind!r}")
        expected = _PARAM_KEYS[self.kind]
        got = tuple(sorted(self.params))
        if got != tuple(sorted(expected)):
            raise ModelFormatError(
                f"{self.kind} params must be {sorted(expected)}, got {sorted(got)}"
            )
        for key, value in self.params.items():
            if int(value) <= 0:
                raise ModelFormatError(f"{self.kind} param {key} must be positive")
        object.__setattr__(self, "params", dict(self.params))
        has_ref = self.weight_ref is not None
        if has_ref != (self.kind in PARAMETERIZED_KINDS):
            raise ModelFormatError(
                f"weight_ref must be present exactly for {PARAMETERIZED_KINDS}, "
                f"offending kind: {self.kind}"
            )

    def weight_key(self) -> str:
        return f"{self.weight_ref}.weight"

    def bias_key(self) -> str:
        return f"{self.weight_ref}.bias"


@dataclass(frozen=True)
class ModelGraph:
    """An ordered chain of layers plus the weight store they reference."""

    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    weights: Mapping[str, FloatTensor]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "weights", dict(self.weights))
        if not self.layers:
            raise ModelFormatError("model has an empty layer list")
        for spec in self.layers:
            if spec.weight_ref is None:
                continue
            for key in (spec.weight_key(), spec.bias_key()):
                if key not in self.weights:
                    raise ModelFormatError(f"missing weight blob {key!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def expected_weight_shapes(spec: LayerSpec) -> dict[str, tuple[int, ...]]:
    """Weight-store shapes a parameterized layer requires."""
    p = spec.params
    if spec.kind == "conv2d":
        return {
            spec.weight_key(): (p["out_channels"], p["in_channels"], p["kernel"], p["kernel"]),
            spec.bias_key(): (p["out_channels"],),
        }
    if spec.kind == "linear":
        return {
            spec.weight_key(): (p["out_features"], p["in_features"]),
            spec.bias_key(): (p["out_features"],),
        }
    return {}


def apply_layer(spec: LayerSpec, x: Tensor, weights: Mapping[str, Tensor], label: str) -> Tensor:
    """Run one layer on ``x`` using tensors from ``weights``."""
    if spec.kind == "conv2d":
        return conv2d(
            x,
            weights[spec.weight_key()],
            weights[spec.bias_key()],
            stride=spec.params["stride"],
            layer=label,
        )
    if spec.kind == "linear":
        return linear(x, weights[spec.weight_key()], weights[spec.bias_key()], layer=label)
    if spec.kind == "relu":
        return relu(x)
    if spec.kind == "maxpool2d":
        return maxpool2d(x, window=spec.params["window"], layer=label)
    if spec.kind == "flatten":
        return flatten(x)
    raise ModelFormatError(f"unknown layer kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# shape inference
# ---------------------------------------------------------------------------


def _layer_output_shape(spec: LayerSpec, shape: tuple[int, ...], idx: int) -> tuple[int, ...]:
    label = f"layer {idx} ({spec.kind})"
    p = spec.params
    if spec.kind == "conv2d":
        if len(shape) != 3:
            raise ShapeError(f"{label}: expects [C,H,W] input, got {shape}")
        c, h, w = shape
        k, s = p["kernel"], p["stride"]
        if c != p["in_channels"]:
            raise ShapeError(f"{label}: input has {c} channels, expects {p['in_channels']}")
        if h < k or w < k:
            raise ShapeError(f"{label}: input {h}x{w} smaller than kernel {k}")
        return (p["out_channels"], (h - k) // s + 1, (w - k) // s + 1)
    if spec.kind == "relu":
        return shape
    if spec.kind == "maxpool2d":
        if len(shape) != 3:
            raise ShapeError(f"{label}: expects [C,H,W] input, got {shape}")
        c, h, w = shape
        win = p["window"]
        if h % win or w % win:
            raise ShapeError(f"{label}: dims {h}x{w} not divisible by window {win}")
        return (c, h // win, w // win)
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    if spec.kind == "linear":
        n = int(np.prod(shape))
        if n != p["in_features"]:
            raise ShapeError(f"{label}: input size {n} != in_features {p['in_features']}")
        return (p["out_features"],)
    raise ModelFormatError(f"unknown layer kind {spec.kind!r}")


def infer_shapes(m: ModelGraph) -> list[tuple[int, ...]]:
    """Output shape after each layer.  A rank-3 input to ``linear`` is
    flattened in place, so no explicit flatten layer is required."""
    shapes = []
    shape = m.input_shape
    for idx, spec in enumerate(m.layers):
        shape = _layer_output_shape(spec, shape, idx)
        shapes.append(shape)
    return shapes


def run_float_inference(m: ModelGraph, x: FloatTensor) -> FloatTensor:
    """Reference real-valued forward pass; returns the final logits."""
    if not isinstance(x, FloatTensor):
        raise ShapeError("run_float_inference expects a FloatTensor input")
    if x.shape != m.input_shape:
        raise ShapeError(f"input shape {x.shape} != model input {m.input_shape}")
    out = x
    for idx, spec in enumerate(m.layers):
        out = apply_layer(spec, out, m.weights, label=f"layer {idx} ({spec.kind})")
    return out


# ---------------------------------------------------------------------------
# slice plans
# ---------------------------------------------------------------------------

ROLE_PUBLIC_PRE = "public-pre"
ROLE_PRIVATE = "private"
ROLE_PUBLIC_POST = "public-post"


@dataclass(frozen=True)
class SlicePlan:
    """Contiguous, non-overlapping layer ranges covering the whole model.

    ``roles`` is set by strategic splitting; when present, only slices
    tagged ``private`` are proven and the rest run digest-logged.
    """

    boundaries: tuple[tuple[int, int], ...]
    roles: tuple[str, ...] | None = None

    def __post_init__(self):
        bounds = tuple((int(s), int(e)) for s, e in self.boundaries)
        if not bounds:
            raise PlanError("a plan needs at least one slice")
        if bounds[0][0] != 0:
            raise PlanError(f"first slice starts at {bounds[0][0]}, expected 0")
        for s, e in bounds:
            if s >= e:
                raise PlanError(f"empty or inverted range [{s},{e})")
        for (prev_s, prev_e), (nxt_s, nxt_e) in zip(bounds, bounds[1:]):
            if prev_e != nxt_s:
                raise PlanError(f"gap or overlap between [{prev_s},{prev_e}) and [{nxt_s},{nxt_e})")
        object.__setattr__(self, "boundaries", bounds)
        if self.roles is not None:
            roles = tuple(self.roles)
            if len(roles) != len(bounds):
                raise PlanError("roles must match slice count")
            valid = {ROLE_PUBLIC_PRE, ROLE_PRIVATE, ROLE_PUBLIC_POST}
            if not set(roles) <= valid:
                raise PlanError(f"invalid roles {roles}")
            object.__setattr__(self, "roles", roles)

    @property
    def n_slices(self) -> int:
        return len(self.boundaries)

    @property
    def end(self) -> int:
        return self.boundaries[-1][1]

    def proved(self, i: int) -> bool:
        return self.roles is None or self.roles[i] == ROLE_PRIVATE

    def describe(self) -> str:
        return ",".join(f"{s}-{e}" for s, e in self.boundaries)


_LENET_PATTERN = (
    "conv2d", "relu", "maxpool2d",
    "conv2d", "relu", "maxpool2d",
    "linear", "relu", "linear", "relu", "linear",
)
_LENET_PATTERN_FLAT = _LENET_PATTERN[:6] + ("flatten",) + _LENET_PATTERN[6:]


def plan_slices(m: ModelGraph, spec: str) -> SlicePlan:
    """Build a plan from a preset name or a boundary expression.

    Expressions are comma-separated half-open ranges over layer indices,
    e.g. ``"0-3,3-6,6-11"``; they must tile ``[0, n_layers)`` exactly.
    The ``lenet5`` preset cuts a conv/pool/linear stack into its five
    natural blocks: two conv-relu-pool blocks, two linear-relu blocks,
    and the output layer.
    """
    n = m.n_layers
    kinds = tuple(spec_.kind for spec_ in m.layers)
    if spec == "lenet5":
        if kinds == _LENET_PATTERN:
            bounds = ((0, 3), (3, 6), (6, 8), (8, 10), (10, 11))
        elif kinds == _LENET_PATTERN_FLAT:
            bounds = ((0, 3), (3, 6), (6, 9), (9, 11), (11, 12))
        else:
            raise PlanError("model layer kinds do not match the lenet5 preset")
        return SlicePlan(bounds)

    parts = [p.strip() for p in spec.split(",") if p.strip()]
    if not parts:
        raise PlanError(f"empty plan expression {spec!r}")
    bounds = []
    for part in parts:
        mobj = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if not mobj:
            raise PlanError(f"bad range {part!r}; expected 'start-end'")
        bounds.append((int(mobj.group(1)), int(mobj.group(2))))
    plan = SlicePlan(tuple(bounds))
    if plan.end != n:
        raise PlanError(f"plan covers [0,{plan.end}) but the model has {n} layers")
    return plan


# ---------------------------------------------------------------------------
# constraint validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_constraints(m: ModelGraph, plan: SlicePlan) -> ValidationReport:
    """Check that a sliced model is a forward chain with isolated parameters.

    Accepts iff the dataflow is a single forward chain (shape inference
    succeeds end to end), no weight_ref is used by layers in two different
    slices, and the plan tiles the layer list.  Never raises; violations
    are itemized.
    """
    violations: list[str] = []

    if plan.end != m.n_layers:
        violations.append(
            f"plan covers [0,{plan.end}) but the model has {m.n_layers} layers"
        )

    try:
        infer_shapes(m)
    except (ShapeError, ModelFormatError) as exc:
        violations.append(f"dataflow broken: {exc}")

    ref_slices: dict[str, set[int]] = {}
    for i, (start, end) in enumerate(plan.boundaries):
        for spec in m.layers[start:min(end, m.n_layers)]:
            if spec.weight_ref is not None:
                ref_slices.setdefault(spec.weight_ref, set()).add(i)
    for ref in sorted(ref_slices):
        used_in = sorted(ref_slices[ref])
        if len(used_in) > 1:
            violations.append(
                f"parameter reuse across slices: weight_ref {ref!r} "
                f"used in slices {used_in}"
            )

    return ValidationReport(tuple(violations))


def extract_slice(m: ModelGraph, plan: SlicePlan, i: int) -> ModelGraph:
    """Standalone sub-model for slice ``i``, carrying only its own weights."""
    if not 0 <= i < plan.n_slices:
        raise PlanError(f"slice index {i} out of range (plan has {plan.n_slices})")
    shapes = infer_shapes(m)
    start, end = plan.boundaries[i]
    if end > m.n_layers:
        raise PlanError(f"plan range [{start},{end}) exceeds the {m.n_layers}-layer model")
    input_shape = m.input_shape if start == 0 else shapes[start - 1]
    layers = m.layers[start:end]
    keys = set()
    for spec in layers:
        if spec.weight_ref is not None:
            keys.add(spec.weight_key())
            keys.add(spec.bias_key())
    weights = {k: m.weights[k] for k in sorted(keys)}
    return ModelGraph(input_shape, layers, weights)


# ---------------------------------------------------------------------------
# model JSON serialization
# ---------------------------------------------------------------------------


def weight_bytes(t: FloatTensor) -> bytes:
    """Canonical little-endian IEEE-754 32-bit encoding of a weight tensor."""
    return t.data.astype("<f4").tobytes()


def weight_digest(t: FloatTensor) -> str:
    return hashlib.sha256(weight_bytes(t)).hexdigest()


def _layer_to_obj(spec: LayerSpec) -> dict:
    obj: dict = {"kind": spec.kind, "params": {k: int(v) for k, v in spec.params.items()}}
    if spec.weight_ref is not None:
        obj["weight_ref"] = spec.weight_ref
    return obj


def model_to_obj(m: ModelGraph) -> dict:
    return {
        "input_shape": list(m.input_shape),
        "layers": [_layer_to_obj(spec) for spec in m.layers],
        "weights": {
            key: {
                "shape": list(t.shape),
                "dtype": "f32",
                "data_b64": base64.b64encode(weight_bytes(t)).decode("ascii"),
            }
            for key, t in sorted(m.weights.items())
        },
    }


def serialize_model(m: ModelGraph) -> bytes:
    """Canonical model JSON bytes (sorted keys, compact separators)."""
    return json.dumps(model_to_obj(m), sort_keys=True, separators=(",", ":")).encode()


def model_digest(m: ModelGraph) -> str:
    return hashlib.sha256(serialize_model(m)).hexdigest()


def _parse_weight_record(key: str, rec, base_dir: Path | None) -> FloatTensor:
    if not isinstance(rec, dict):
        raise ModelFormatError(f"weight {key!r}: record must be an object")
    shape = rec.get("shape")
    if not isinstance(shape, list) or not shape:
        raise ModelFormatError(f"weight {key!r}: missing shape")
    if rec.get("dtype") != "f32":
        raise ModelFormatError(f"weight {key!r}: unsupported dtype {rec.get('dtype')!r}")
    n = int(np.prod([int(d) for d in shape]))
    if "data_b64" in rec:
        try:
            raw = base64.b64decode(rec["data_b64"], validate=True)
        except Exception as exc:
            raise ModelFormatError(f"weight {key!r}: bad base64: {exc}") from exc
    elif "file" in rec:
        if base_dir is None:
            raise ModelFormatError(f"weight {key!r}: sidecar reference without a base directory")
        path = Path(base_dir) / str(rec["file"])
        if not path.is_file():
            raise ModelFormatError(f"weight {key!r}: sidecar file {path} not found")
        offset, length = int(rec.get("offset", 0)), int(rec.get("length", -1))
        blob = path.read_bytes()
        if length < 0:
            length = len(blob) - offset
        raw = blob[offset : offset + length]
        if len(raw) != length:
            raise ModelFormatError(f"weight {key!r}: sidecar range out of bounds")
    else:
        raise ModelFormatError(f"missing weight blob for {key!r}")
    if len(raw) != 4 * n:
        raise ModelFormatError(
            f"weight {key!r}: blob holds {len(raw)} bytes, shape {shape} needs {4 * n}"
        )
    if "sha256" in rec and hashlib.sha256(raw).hexdigest() != str(rec["sha256"]).lower():
        raise ModelFormatError(f"weight {key!r}: digest mismatch")
    values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    return FloatTensor(tuple(int(d) for d in shape), values.reshape([int(d) for d in shape]))


def parse_model(document: bytes, base_dir: Path | str | None = None) -> ModelGraph:
    """Parse and validate model JSON; raises ``ModelFormatError`` on defects."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("top-level document must be an object")
    input_shape = doc.get("input_shape")
    if not isinstance(input_shape, list) or not input_shape:
        raise ModelFormatError("missing or empty input_shape")
    layer_objs = doc.get("layers")
    if not isinstance(layer_objs, list) or not layer_objs:
        raise ModelFormatError("model has an empty layer list")

    layers = []
    for idx, obj in enumerate(layer_objs):
        if not isinstance(obj, dict) or "kind" not in obj:
            raise ModelFormatError(f"layer {idx}: not an object with a kind")
        layers.append(
            LayerSpec(
                kind=obj["kind"],
                params={k: int(v) for k, v in obj.get("params", {}).items()},
                weight_ref=obj.get("weight_ref"),
            )
        )

    weight_objs = doc.get("weights", {})
    if not isinstance(weight_objs, dict):
        raise ModelFormatError("weights must be an object")
    base = Path(base_dir) if base_dir is not None else None
    weights = {key: _parse_weight_record(key, rec, base) for key, rec in weight_objs.items()}

    referenced: set[str] = set()
    for idx, spec in enumerate(layers):
        for key, want_shape in expected_weight_shapes(spec).items():
            if key not in weights:
                raise ModelFormatError(f"missing weight blob for {key!r} (layer {idx})")
            if weights[key].shape != want_shape:
                raise ModelFormatError(
                    f"weight {key!r}: shape {weights[key].shape} != expected {want_shape}"
                )
            referenced.add(key)
    unused = sorted(set(weights) - referenced)
    if unused:
        raise ModelFormatError(f"unreferenced weight entries: {unused}")

    m = ModelGraph(tuple(int(d) for d in input_shape), tuple(layers), weights)
    try:
        infer_shapes(m)
    except ShapeError as exc:
        raise ModelFormatError(f"shape inference failed: {exc}") from exc
    return m


# ---------------------------------------------------------------------------
# slice manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SliceManifest:
    """Identity card for one slice: layer range, boundary shapes, digests."""

    slice_id: int
    start: int
    end: int
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    weight_digests: Mapping[str, str]
    circuit_digest: str | None = None

    def to_obj(self) -> dict:
        obj = {
            "slice_id": self.slice_id,
            "layers": [self.start, self.end],
            "input_shape": list(self.input_shape),
            "output_shape": list(self.output_shape),
            "weight_digests": dict(sorted(self.weight_digests.items())),
        }
        if self.circuit_digest is not None:
            obj["circuit_digest"] = self.circuit_digest
        return obj


def build_manifests(m: ModelGraph, plan: SlicePlan) -> list[SliceManifest]:
    shapes = infer_shapes(m)
    manifests = []
    for i, (start, end) in enumerate(plan.boundaries):
        sub = extract_slice(m, plan, i)
        manifests.append(
            SliceManifest(
                slice_id=i,
                start=start,
                end=end,
                input_shape=sub.input_shape,
                output_shape=shapes[end - 1],
                weight_digests={k: weight_digest(t) for k, t in sub.weights.items()},
            )
        )
    return manifests
