"""Assemble ONNX files on the wire for tests, via the low-level encoders."""

import struct

import numpy as np

from model_importer.onnx_wire import (
    DT_FLOAT,
    DT_INT64,
    field_bytes,
    field_packed_ints,
    field_string,
    field_varint,
    write_varint,
)

# AttributeProto.AttributeType values
ATTR_FLOAT, ATTR_INT, ATTR_INTS = 1, 2, 7


def tensor_proto(name: str, array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    parts = [field_packed_ints(1, arr.shape)]
    if arr.dtype.kind == "f":
        parts.append(field_varint(2, DT_FLOAT))
        parts.append(field_bytes(9, arr.astype("<f4").tobytes()))
    else:
        parts.append(field_varint(2, DT_INT64))
        parts.append(field_bytes(9, arr.astype("<i8").tobytes()))
    parts.append(field_string(8, name))
    return b"".join(parts)


def attribute(name: str, value) -> bytes:
    parts = [field_string(1, name)]
    if isinstance(value, float):
        parts.append(write_varint(2 << 3 | 5) + struct.pack("<f", value))
        parts.append(field_varint(20, ATTR_FLOAT))
    elif isinstance(value, int):
        parts.append(field_varint(3, value))
        parts.append(field_varint(20, ATTR_INT))
    else:
        parts.append(field_packed_ints(8, value))
        parts.append(field_varint(20, ATTR_INTS))
    return b"".join(parts)


def node(op_type: str, inputs, outputs, name: str = "", attrs: dict | None = None) -> bytes:
    parts = [field_string(1, i) for i in inputs]
    parts += [field_string(2, o) for o in outputs]
    if name:
        parts.append(field_string(3, name))
    parts.append(field_string(4, op_type))
    for key, value in (attrs or {}).items():
        parts.append(field_bytes(5, attribute(key, value)))
    return b"".join(parts)


def value_info(name: str, dims) -> bytes:
    """dims entries: int for fixed, str for a symbolic dimension."""
    dim_parts = []
    for d in dims:
        if isinstance(d, str):
            dim_parts.append(field_bytes(1, field_string(2, d)))
        else:
            dim_parts.append(field_bytes(1, field_varint(1, int(d))))
    shape = b"".join(dim_parts)
    tensor_type = field_varint(1, DT_FLOAT) + field_bytes(2, shape)
    type_proto = field_bytes(1, tensor_type)
    return field_string(1, name) + field_bytes(2, type_proto)


def graph(nodes, initializers, inputs, outputs, name="g") -> bytes:
    parts = [field_bytes(1, n) for n in nodes]
    parts.append(field_string(2, name))
    parts += [field_bytes(5, t) for t in initializers]
    parts += [field_bytes(11, vi) for vi in inputs]
    parts += [field_bytes(12, vi) for vi in outputs]
    return b"".join(parts)


def model(graph_bytes: bytes) -> bytes:
    opset = field_string(1, "") + field_varint(2, 13)
    return field_varint(1, 8) + field_bytes(7, graph_bytes) + field_bytes(8, opset)


def lenet_weights(seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    return {
        "c1.w": uniform((6, 3, 5, 5), 75), "c1.b": uniform((6,), 75),
        "c2.w": uniform((16, 6, 5, 5), 150), "c2.b": uniform((16,), 150),
        "f1.w": uniform((120, 400), 400), "f1.b": uniform((120,), 400),
        "f2.w": uniform((84, 120), 120), "f2.b": uniform((84,), 120),
        "f3.w": uniform((10, 84), 84), "f3.b": uniform((10,), 84),
    }


def lenet_onnx_bytes(weights: dict[str, np.ndarray], symbolic_batch: bool = True) -> bytes:
    """The classic conv/pool/linear chain as an ONNX file, batch dim 1."""
    nodes = [
        node("Conv", ["x", "c1.w", "c1.b"], ["t1"], "conv1",
             {"kernel_shape": [5, 5], "strides": [1, 1], "pads": [0, 0, 0, 0]}),
        node("Relu", ["t1"], ["t2"], "relu1"),
        node("MaxPool", ["t2"], ["t3"], "pool1", {"kernel_shape": [2, 2], "strides": [2, 2]}),
        node("Conv", ["t3", "c2.w", "c2.b"], ["t4"], "conv2",
             {"kernel_shape": [5, 5], "strides": [1, 1], "pads": [0, 0, 0, 0]}),
        node("Relu", ["t4"], ["t5"], "relu2"),
        node("MaxPool", ["t5"], ["t6"], "pool2", {"kernel_shape": [2, 2], "strides": [2, 2]}),
        node("Flatten", ["t6"], ["t7"], "flatten", {"axis": 1}),
        node("Gemm", ["t7", "f1.w", "f1.b"], ["t8"], "fc1", {"transB": 1}),
        node("Relu", ["t8"], ["t9"], "relu3"),
        node("Gemm", ["t9", "f2.w", "f2.b"], ["t10"], "fc2", {"transB": 1}),
        node("Relu", ["t10"], ["t11"], "relu4"),
        node("Gemm", ["t11", "f3.w", "f3.b"], ["y"], "fc3", {"transB": 1}),
    ]
    initializers = [tensor_proto(name, arr) for name, arr in weights.items()]
    batch = "N" if symbolic_batch else 1
    inputs = [value_info("x", [batch, 3, 32, 32])]
    outputs = [value_info("y", [batch, 10])]
    return model(graph(nodes, initializers, inputs, outputs, "lenet"))
