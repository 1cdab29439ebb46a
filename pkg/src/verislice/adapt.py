"""Fixed-point adaptation of model slices, execution traces, witness format.

A slice is adapted by quantizing every weight tensor to scale ``f`` and
every bias to scale ``2f`` (round half away from zero).  Executing an
adapted slice records the output of every layer; the resulting witness is
exactly reproducible, and its canonical binary form is what provers sign
off on.

Witness binary format (all integers little-endian, no padding):

    u64  total length in bytes, including this prefix
    u32  slice_id
    32B  circuit digest (raw SHA-256)
    u32  scale_bits
    u32  trace length T
    input tensor block
    T trace tensor blocks
    output tensor block

A tensor block is ``u32 rank, u32 dims..., int64 values``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FixedPointOverflowError, ProofError, ShapeError
from .model import LayerSpec, ModelGraph, SlicePlan, apply_layer, extract_slice, infer_shapes
from .tensor import (
    MAGNITUDE_LIMIT,
    FieldTensor,
    FloatTensor,
    field_tensor_block,
    read_field_tensor_block,
    round_half_away,
    rshift_round_half_away,
)

MIN_SCALE_BITS = 4
MAX_SCALE_BITS = 24


@dataclass(frozen=True)
class AdaptConfig:
    """Fixed-point configuration: one global scale, optional per-slice scales."""

    scale_bits: int = 16
    per_slice_scales: Mapping[int, int] | None = None

    def __post_init__(self):
        scales = [self.scale_bits]
        if self.per_slice_scales is not None:
            object.__setattr__(self, "per_slice_scales", dict(self.per_slice_scales))
            scales.extend(self.per_slice_scales.values())
        for f in scales:
            if not MIN_SCALE_BITS <= int(f) <= MAX_SCALE_BITS:
                raise ShapeError(
                    f"scale_bits must lie in [{MIN_SCALE_BITS},{MAX_SCALE_BITS}], got {f}"
                )

    def scale_for(self, slice_id: int) -> int:
        if self.per_slice_scales is not None and slice_id in self.per_slice_scales:
            return int(self.per_slice_scales[slice_id])
        return int(self.scale_bits)


def quantize_tensor(t: FloatTensor, scale_bits: int) -> FieldTensor:
    """Map reals onto the 2**-f lattice: round-half-away(v * 2**f)."""
    if scale_bits < 0:
        raise ShapeError("scale_bits must be non-negative")
    scaled = t.data * float(1 << scale_bits)
    if scaled.size and float(np.abs(scaled).max()) >= float(MAGNITUDE_LIMIT):
        raise FixedPointOverflowError(
            f"value magnitude reaches 2**62 at scale {scale_bits}"
        )
    return FieldTensor(t.shape, round_half_away(scaled).astype(np.int64), scale_bits)


def dequantize_tensor(q: FieldTensor) -> FloatTensor:
    """Inverse map: v = data / 2**scale_bits."""
    return FloatTensor(q.shape, q.data.astype(np.float64) / float(1 << q.scale_bits))


def rescale_boundary(t: FieldTensor, from_f: int, to_f: int) -> FieldTensor:
    """Re-express a tensor at a different scale; exact when to_f >= from_f."""
    if t.scale_bits != from_f:
        raise ShapeError(f"tensor is at scale {t.scale_bits}, not {from_f}")
    if to_f == from_f:
        return t
    if to_f > from_f:
        shift = to_f - from_f
        if t.size and float(np.abs(t.data).max()) * (1 << shift) >= float(MAGNITUDE_LIMIT):
            raise FixedPointOverflowError(
                f"rescale {from_f}->{to_f} would reach 2**62"
            )
        return FieldTensor(t.shape, t.data << np.int64(shift), to_f)
    return FieldTensor(t.shape, rshift_round_half_away(t.data, from_f - to_f), to_f)


@dataclass(frozen=True)
class AdaptedSlice:
    """A slice with quantized parameters, identified by its circuit digest.

    The digest covers the layer list, the quantized parameters (sorted by
    key) and the scale; it is independent of weight-map insertion order
    and of the slice's position in a plan.
    """

    slice_id: int
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    weights: Mapping[str, FieldTensor]
    scale_bits: int
    circuit_digest: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))
        object.__setattr__(self, "circuit_digest", _circuit_digest(self))

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def _circuit_digest(s: AdaptedSlice) -> str:
    h = hashlib.sha256()
    h.update(b"CIRC1")
    layer_desc = [
        {"kind": spec.kind, "params": dict(spec.params), "weight_ref": spec.weight_ref}
        for spec in s.layers
    ]
    h.update(json.dumps(layer_desc, sort_keys=True, separators=(",", ":")).encode())
    h.update(np.array([s.scale_bits], dtype="<u4").tobytes())
    h.update(np.array([len(s.input_shape), *s.input_shape], dtype="<u4").tobytes())
    for key in sorted(s.weights):
        t = s.weights[key]
        h.update(key.encode())
        h.update(np.array([t.scale_bits], dtype="<u4").tobytes())
        h.update(field_tensor_block(t))
    return h.hexdigest()


def adapt_slice(slice_model: ModelGraph, cfg: AdaptConfig, slice_id: int) -> AdaptedSlice:
    """Quantize a slice's parameters: weights at f, biases at 2f."""
    shapes = infer_shapes(slice_model)
    f = cfg.scale_for(slice_id)
    quantized: dict[str, FieldTensor] = {}
    for spec in slice_model.layers:
        if spec.weight_ref is None:
            continue
        wkey, bkey = spec.weight_key(), spec.bias_key()
        quantized[wkey] = quantize_tensor(slice_model.weights[wkey], f)
        quantized[bkey] = quantize_tensor(slice_model.weights[bkey], 2 * f)
    return AdaptedSlice(
        slice_id=slice_id,
        input_shape=slice_model.input_shape,
        output_shape=shapes[-1],
        layers=slice_model.layers,
        weights=quantized,
        scale_bits=f,
    )


def prepare_slices(m: ModelGraph, plan: SlicePlan, cfg: AdaptConfig) -> list[AdaptedSlice]:
    """Adapt every slice of a plan, in order."""
    return [adapt_slice(extract_slice(m, plan, i), cfg, i) for i in range(plan.n_slices)]


# ---------------------------------------------------------------------------
# witnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    """Per-layer execution trace of an adapted slice on one input."""

    slice_id: int
    circuit_digest: str
    input: FieldTensor
    trace: tuple[FieldTensor, ...]
    output: FieldTensor

    def __post_init__(self):
        object.__setattr__(self, "trace", tuple(self.trace))


def run_adapted(s: AdaptedSlice, x: FieldTensor) -> Witness:
    """Execute an adapted slice, recording every layer output."""
    if x.scale_bits != s.scale_bits:
        raise ShapeError(
            f"input scale {x.scale_bits} != slice scale {s.scale_bits}"
        )
    if x.shape != s.input_shape:
        raise ShapeError(f"input shape {x.shape} != slice input {s.input_shape}")
    trace = []
    out = x
    for idx, spec in enumerate(s.layers):
        out = apply_layer(spec, out, s.weights, label=f"slice {s.slice_id} layer {idx} ({spec.kind})")
        trace.append(out)
    return Witness(
        slice_id=s.slice_id,
        circuit_digest=s.circuit_digest,
        input=x,
        trace=tuple(trace),
        output=trace[-1],
    )


def witness_to_bytes(w: Witness) -> bytes:
    body = bytearray()
    body += np.array([w.slice_id], dtype="<u4").tobytes()
    body += bytes.fromhex(w.circuit_digest)
    body += np.array([w.input.scale_bits, len(w.trace)], dtype="<u4").tobytes()
    body += field_tensor_block(w.input)
    for t in w.trace:
        body += field_tensor_block(t)
    body += field_tensor_block(w.output)
    total = np.array([8 + len(body)], dtype="<u8").tobytes()
    return total + bytes(body)


def witness_from_bytes(buf: bytes) -> Witness:
    """Parse the canonical witness encoding; raises ``ProofError`` on damage."""
    try:
        (total,) = np.frombuffer(buf, dtype="<u8", count=1, offset=0)
        if int(total) != len(buf):
            raise ProofError(
                f"witness length prefix {int(total)} != actual {len(buf)}"
            )
        offset = 8
        (slice_id,) = np.frombuffer(buf, dtype="<u4", count=1, offset=offset)
        offset += 4
        digest = buf[offset : offset + 32].hex()
        offset += 32
        scale_bits, n_trace = np.frombuffer(buf, dtype="<u4", count=2, offset=offset)
        offset += 8
        x, offset = read_field_tensor_block(buf, offset, int(scale_bits))
        trace = []
        for _ in range(int(n_trace)):
            t, offset = read_field_tensor_block(buf, offset, int(scale_bits))
            trace.append(t)
        out, offset = read_field_tensor_block(buf, offset, int(scale_bits))
        if offset != len(buf):
            raise ProofError("witness has trailing bytes")
    except ProofError:
        raise
    except Exception as exc:
        raise ProofError(f"witness malformed: {exc}") from exc
    return Witness(
        slice_id=int(slice_id),
        circuit_digest=digest,
        input=x,
        trace=tuple(trace),
        output=out,
    )
