"""Minimal protobuf wire-format access to the ONNX subset this tool accepts.

The usual protobuf stack is not a dependency: the reader below walks the
wire format directly (varints, 32/64-bit scalars, length-delimited
fields) and exposes just the message fields the importer needs.  Field
numbers follow the public ONNX schema.  Unknown fields are skipped, so
files written by real exporters parse as long as the graph sticks to the
supported ops; anything outside the subset surfaces as a structured
error, never as silent acceptance.

Low-level encode helpers live here too; tests use them to assemble
fixture files through the same wire rules.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .modeljson import ImportError_

# wire types
_VARINT, _I64, _LEN, _I32 = 0, 1, 2, 5

# TensorProto.DataType values we accept
DT_FLOAT = 1
DT_INT64 = 7


# ---------------------------------------------------------------------------
# primitive decoding
# ---------------------------------------------------------------------------


def read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise ImportError_("truncated varint")
        byte = buf[pos]
        result |= (byte & 0x7F) << shift
        pos += 1
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise ImportError_("varint too long")


def _signed64(value: int) -> int:
    value &= (1 << 64) - 1
    return value - (1 << 64) if value >= (1 << 63) else value


def iter_fields(buf: bytes):
    """Yield (field_number, wire_type, value); value is int or bytes."""
    pos = 0
    while pos < len(buf):
        key, pos = read_varint(buf, pos)
        number, wire = key >> 3, key & 0x7
        if wire == _VARINT:
            value, pos = read_varint(buf, pos)
        elif wire == _I64:
            if pos + 8 > len(buf):
                raise ImportError_("truncated 64-bit field")
            value = struct.unpack_from("<q", buf, pos)[0]
            pos += 8
        elif wire == _LEN:
            length, pos = read_varint(buf, pos)
            value = buf[pos : pos + length]
            if len(value) != length:
                raise ImportError_("truncated length-delimited field")
            pos += length
        elif wire == _I32:
            if pos + 4 > len(buf):
                raise ImportError_("truncated 32-bit field")
            value = struct.unpack_from("<i", buf, pos)[0]
            pos += 4
        else:
            raise ImportError_(f"unsupported wire type {wire}")
        yield number, wire, value


def group_fields(buf: bytes) -> dict[int, list]:
    fields: dict[int, list] = {}
    for number, wire, value in iter_fields(buf):
        fields.setdefault(number, []).append((wire, value))
    return fields


def _ints(entries) -> list[int]:
    """Repeated int64 field: packed (proto3 default) or one-per-entry."""
    out: list[int] = []
    for wire, value in entries:
        if wire == _VARINT:
            out.append(_signed64(value))
        elif wire == _LEN:
            pos = 0
            while pos < len(value):
                v, pos = read_varint(value, pos)
                out.append(_signed64(v))
        else:
            raise ImportError_("unexpected wire type in int list")
    return out


def _string(entries) -> str:
    return entries[0][1].decode("utf-8")


# ---------------------------------------------------------------------------
# typed views over the messages the importer needs
# ---------------------------------------------------------------------------


@dataclass
class Attribute:
    name: str
    i: int | None = None
    f: float | None = None
    s: bytes | None = None
    ints: list[int] = field(default_factory=list)


@dataclass
class GraphNode:
    op_type: str
    name: str
    inputs: list[str]
    outputs: list[str]
    attributes: dict[str, Attribute]


@dataclass
class GraphTensorInfo:
    name: str
    dims: list[int | None]  # None marks a symbolic dimension


@dataclass
class OnnxGraph:
    name: str
    nodes: list[GraphNode]
    initializers: dict[str, np.ndarray]
    inputs: list[GraphTensorInfo]
    outputs: list[GraphTensorInfo]


def _parse_attribute(buf: bytes) -> Attribute:
    fields = group_fields(buf)
    attr = Attribute(name=_string(fields[1]) if 1 in fields else "")
    if 3 in fields:
        attr.i = _signed64(fields[3][0][1])
    if 2 in fields:
        attr.f = struct.unpack("<f", struct.pack("<i", fields[2][0][1]))[0]
    if 4 in fields:
        attr.s = fields[4][0][1]
    if 8 in fields:
        attr.ints = _ints(fields[8])
    return attr


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    fields = group_fields(buf)
    dims = _ints(fields.get(1, []))
    data_type = fields[2][0][1] if 2 in fields else DT_FLOAT
    name = _string(fields[8]) if 8 in fields else ""
    if data_type == DT_FLOAT:
        if 9 in fields:  # raw_data
            values = np.frombuffer(fields[9][0][1], dtype="<f4")
        elif 4 in fields:  # float_data, packed or repeated fixed32
            chunks = []
            for wire, value in fields[4]:
                if wire == _LEN:
                    chunks.append(np.frombuffer(value, dtype="<f4"))
                else:
                    chunks.append(np.frombuffer(struct.pack("<i", value), dtype="<f4"))
            values = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<f4")
        else:
            raise ImportError_(f"tensor {name!r}: no float payload")
        array = values.astype(np.float64)
    elif data_type == DT_INT64:
        if 9 in fields:
            array = np.frombuffer(fields[9][0][1], dtype="<i8").astype(np.int64)
        elif 7 in fields:
            array = np.asarray(_ints(fields[7]), dtype=np.int64)
        else:
            raise ImportError_(f"tensor {name!r}: no int64 payload")
    else:
        raise ImportError_(f"tensor {name!r}: unsupported data_type {data_type}")
    shape = [int(d) for d in dims]
    expected = int(np.prod(shape)) if shape else array.size
    if array.size != expected:
        raise ImportError_(f"tensor {name!r}: payload does not match dims {shape}")
    return name, array.reshape(shape)


def _parse_value_info(buf: bytes) -> GraphTensorInfo:
    fields = group_fields(buf)
    name = _string(fields[1]) if 1 in fields else ""
    dims: list[int | None] = []
    if 2 in fields:  # TypeProto
        type_fields = group_fields(fields[2][0][1])
        if 1 in type_fields:  # tensor_type
            tensor_fields = group_fields(type_fields[1][0][1])
            if 2 in tensor_fields:  # shape
                shape_fields = group_fields(tensor_fields[2][0][1])
                for _, dim_buf in shape_fields.get(1, []):
                    dim_fields = group_fields(dim_buf)
                    if 1 in dim_fields:
                        dims.append(int(_signed64(dim_fields[1][0][1])))
                    else:
                        dims.append(None)  # dim_param or absent: symbolic
    return GraphTensorInfo(name=name, dims=dims)


def _parse_node(buf: bytes) -> GraphNode:
    fields = group_fields(buf)
    return GraphNode(
        op_type=_string(fields[4]) if 4 in fields else "",
        name=_string(fields[3]) if 3 in fields else "",
        inputs=[v.decode() for _, v in fields.get(1, [])],
        outputs=[v.decode() for _, v in fields.get(2, [])],
        attributes={
            a.name: a for a in (_parse_attribute(v) for _, v in fields.get(5, []))
        },
    )


def parse_model(buf: bytes) -> OnnxGraph:
    """Parse a serialized model file down to its graph."""
    fields = group_fields(buf)
    if 7 not in fields:
        raise ImportError_("file has no graph; not a model file?")
    graph_fields = group_fields(fields[7][0][1])
    initializers = dict(_parse_tensor(v) for _, v in graph_fields.get(5, []))
    return OnnxGraph(
        name=_string(graph_fields[2]) if 2 in graph_fields else "",
        nodes=[_parse_node(v) for _, v in graph_fields.get(1, [])],
        initializers=initializers,
        inputs=[_parse_value_info(v) for _, v in graph_fields.get(11, [])],
        outputs=[_parse_value_info(v) for _, v in graph_fields.get(12, [])],
    )


# ---------------------------------------------------------------------------
# primitive encoding (fixture construction and round-trip tests)
# ---------------------------------------------------------------------------


def write_varint(value: int) -> bytes:
    value &= (1 << 64) - 1
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def field_varint(number: int, value: int) -> bytes:
    return write_varint(number << 3 | _VARINT) + write_varint(value)


def field_bytes(number: int, payload: bytes) -> bytes:
    return write_varint(number << 3 | _LEN) + write_varint(len(payload)) + payload


def field_string(number: int, text: str) -> bytes:
    return field_bytes(number, text.encode("utf-8"))


def field_packed_ints(number: int, values) -> bytes:
    payload = b"".join(write_varint(int(v)) for v in values)
    return field_bytes(number, payload)
