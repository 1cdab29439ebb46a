"""Map a parsed ONNX chain graph onto the model JSON format.

Accepted ops: Conv, Relu, MaxPool, Flatten, Reshape (flatten-equivalent),
Gemm.  Anything else fails the import with the op named; recurrent ops
get a dedicated message.  The graph must be a single chain: each node
consumes the previous node's output plus initializers only.
"""

from __future__ import annotations

import numpy as np

from .modeljson import ImportError_, layer, weight_entry
from .onnx_wire import GraphNode, OnnxGraph, parse_model

RECURRENT_OPS = {"RNN", "LSTM", "GRU", "Scan", "Loop"}


def _attr_ints(node: GraphNode, name: str, default=None) -> list[int] | None:
    if name in node.attributes:
        return list(node.attributes[name].ints)
    return default


def _attr_int(node: GraphNode, name: str, default=None):
    if name in node.attributes:
        return node.attributes[name].i
    return default


def _attr_float(node: GraphNode, name: str, default=None):
    if name in node.attributes:
        return node.attributes[name].f
    return default


def _require(cond: bool, message: str):
    if not cond:
        raise ImportError_(message)


def _conv_params(node: GraphNode, w: np.ndarray) -> dict:
    _require(w.ndim == 4, f"node {node.name!r}: Conv weight must be rank 4")
    o, c, kh, kw = w.shape
    _require(kh == kw, f"node {node.name!r}: only square kernels supported")
    kernel_shape = _attr_ints(node, "kernel_shape", [kh, kw])
    _require(kernel_shape == [kh, kw], f"node {node.name!r}: kernel_shape mismatch")
    strides = _attr_ints(node, "strides", [1, 1])
    _require(strides[0] == strides[1], f"node {node.name!r}: anisotropic stride")
    pads = _attr_ints(node, "pads", [0, 0, 0, 0])
    _require(all(p == 0 for p in pads), f"node {node.name!r}: padding unsupported")
    dilations = _attr_ints(node, "dilations", [1, 1])
    _require(all(d == 1 for d in dilations), f"node {node.name!r}: dilation unsupported")
    _require(_attr_int(node, "group", 1) == 1, f"node {node.name!r}: grouped conv unsupported")
    return {"in_channels": int(c), "out_channels": int(o), "kernel": int(kh),
            "stride": int(strides[0])}


def _pool_window(node: GraphNode) -> int:
    kernel = _attr_ints(node, "kernel_shape")
    _require(kernel is not None and kernel[0] == kernel[1],
             f"node {node.name!r}: MaxPool needs a square kernel_shape")
    strides = _attr_ints(node, "strides", kernel)
    _require(strides == kernel,
             f"node {node.name!r}: only non-overlapping pooling (stride == kernel)")
    pads = _attr_ints(node, "pads", [0, 0, 0, 0])
    _require(all(p == 0 for p in pads), f"node {node.name!r}: padded pooling unsupported")
    return int(kernel[0])


def _is_flatten_reshape(target: np.ndarray) -> bool:
    t = [int(v) for v in target.reshape(-1)]
    return t in ([-1], [1, -1]) or (len(t) == 2 and t[0] == 1 and t[1] > 0) or (
        len(t) == 1 and t[0] > 0
    )


def convert_graph(graph: OnnxGraph) -> tuple[dict, list[dict]]:
    """Returns (model JSON document, op mapping table)."""
    init = graph.initializers
    real_inputs = [vi for vi in graph.inputs if vi.name not in init]
    _require(len(real_inputs) == 1,
             f"expected exactly one graph input, found {len(real_inputs)}")
    entry = real_inputs[0]
    _require(len(entry.dims) >= 2, "graph input must carry a shape")
    batch, *rest = entry.dims
    _require(batch is None or batch == 1,
             f"leading batch dimension must be 1 or symbolic, got {batch}")
    _require(all(isinstance(d, int) and d > 0 for d in rest),
             "dynamic shapes unsupported beyond the batch dimension")
    input_shape = [int(d) for d in rest]

    layers: list[dict] = []
    weights: dict[str, dict] = {}
    mapping: list[dict] = []
    current = entry.name

    def next_is_linear(index: int) -> bool:
        return index + 1 < len(graph.nodes) and graph.nodes[index + 1].op_type == "Gemm"

    def claim(node: GraphNode, *names: str):
        for name in names:
            _require(name in init, f"node {node.name!r}: missing initializer {name!r}")
        return [init[name] for name in names]

    for index, node in enumerate(graph.nodes):
        if node.op_type in RECURRENT_OPS:
            raise ImportError_(f"unsupported: recurrence ({node.op_type})")
        _require(len(node.outputs) == 1, f"node {node.name!r}: multi-output nodes unsupported")
        _require(node.inputs and node.inputs[0] == current,
                 f"node {node.name!r}: graph is not a single chain")
        for extra in node.inputs[1:]:
            _require(extra in init,
                     f"node {node.name!r}: non-initializer side input {extra!r}")

        if node.op_type == "Conv":
            ref = f"conv{index}"
            w = claim(node, node.inputs[1])[0]
            b = claim(node, node.inputs[2])[0] if len(node.inputs) > 2 else np.zeros(w.shape[0])
            params = _conv_params(node, w)
            layers.append(layer("conv2d", params, ref))
            weights[f"{ref}.weight"] = weight_entry(w)
            weights[f"{ref}.bias"] = weight_entry(b)
            kind = "conv2d"
        elif node.op_type == "Relu":
            layers.append(layer("relu"))
            kind = "relu"
        elif node.op_type == "MaxPool":
            layers.append(layer("maxpool2d", {"window": _pool_window(node)}))
            kind = "maxpool2d"
        elif node.op_type in ("Flatten", "Reshape"):
            if node.op_type == "Flatten":
                axis = _attr_int(node, "axis", 1)
                _require(axis in (0, 1), f"node {node.name!r}: Flatten axis {axis} unsupported")
            else:
                target = claim(node, node.inputs[1])[0]
                _require(_is_flatten_reshape(target),
                         f"node {node.name!r}: only flatten-equivalent reshapes supported")
            # the target format flattens implicitly in front of linear
            # layers, so a flatten feeding one folds away
            if next_is_linear(index):
                mapping.append({"node": node.name or f"#{index}", "op": node.op_type,
                                "kind": "flatten", "folded": True})
                current = node.outputs[0]
                continue
            layers.append(layer("flatten"))
            kind = "flatten"
        elif node.op_type == "Gemm":
            _require(_attr_float(node, "alpha", 1.0) == 1.0, f"node {node.name!r}: alpha != 1")
            _require(_attr_float(node, "beta", 1.0) == 1.0, f"node {node.name!r}: beta != 1")
            _require(_attr_int(node, "transA", 0) == 0, f"node {node.name!r}: transA unsupported")
            ref = f"fc{index}"
            w = claim(node, node.inputs[1])[0]
            _require(w.ndim == 2, f"node {node.name!r}: Gemm weight must be rank 2")
            if _attr_int(node, "transB", 0) == 0:
                w = w.T
            b = claim(node, node.inputs[2])[0] if len(node.inputs) > 2 else np.zeros(w.shape[0])
            layers.append(layer(
                "linear",
                {"in_features": int(w.shape[1]), "out_features": int(w.shape[0])},
                ref,
            ))
            weights[f"{ref}.weight"] = weight_entry(w)
            weights[f"{ref}.bias"] = weight_entry(b)
            kind = "linear"
        else:
            raise ImportError_(f"unsupported op: {node.op_type}")

        mapping.append({"node": node.name or f"#{index}", "op": node.op_type, "kind": kind})
        current = node.outputs[0]

    _require(bool(graph.outputs) and graph.outputs[0].name == current,
             "graph output does not terminate the chain")
    _require(bool(layers), "graph has no nodes")
    return (
        {"input_shape": input_shape, "layers": layers, "weights": weights},
        mapping,
    )


def evaluate_source(graph: OnnxGraph, x: np.ndarray) -> np.ndarray:
    """Execute the parsed graph directly under source-op semantics.

    This is the importer's stand-in for the source runtime when checking
    a conversion: it works off the raw attributes and initializers, not
    off the converted document.
    """
    init = graph.initializers
    real_inputs = [vi for vi in graph.inputs if vi.name not in init]
    values = {real_inputs[0].name: np.asarray(x, dtype=np.float64)[None, ...]}
    for node in graph.nodes:
        a = values[node.inputs[0]]
        if node.op_type == "Conv":
            w = init[node.inputs[1]]
            b = init[node.inputs[2]] if len(node.inputs) > 2 else np.zeros(w.shape[0])
            s = _attr_ints(node, "strides", [1, 1])[0]
            k = w.shape[2]
            windows = np.lib.stride_tricks.sliding_window_view(a[0], (k, k), axis=(1, 2))
            windows = windows[:, ::s, ::s]
            out = np.tensordot(w, windows, axes=([1, 2, 3], [0, 3, 4])) + b[:, None, None]
            out = out[None, ...]
        elif node.op_type == "Relu":
            out = np.maximum(a, 0.0)
        elif node.op_type == "MaxPool":
            win = _attr_ints(node, "kernel_shape")[0]
            n, c, h, wd = a.shape
            out = a.reshape(n, c, h // win, win, wd // win, win).max(axis=(3, 5))
        elif node.op_type in ("Flatten", "Reshape"):
            out = a.reshape(1, -1)
        elif node.op_type == "Gemm":
            w = init[node.inputs[1]]
            if _attr_int(node, "transB", 0):
                w = w.T
            b = init[node.inputs[2]] if len(node.inputs) > 2 else np.zeros(w.shape[1])
            out = a.reshape(1, -1) @ w + b
        else:
            raise ImportError_(f"unsupported op: {node.op_type}")
        values[node.outputs[0]] = out
    return values[graph.nodes[-1].outputs[0]].reshape(-1)


def import_onnx_bytes(buf: bytes) -> tuple[dict, list[dict], OnnxGraph]:
    graph = parse_model(buf)
    doc, mapping = convert_graph(graph)
    return doc, mapping, graph
