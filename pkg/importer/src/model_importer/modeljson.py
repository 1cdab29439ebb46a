"""The target model JSON format: building, serializing, and evaluating.

This tool talks to the inference framework only through this file format,
so the format logic lives here independently: canonical serialization is
JSON with sorted keys and compact separators, weights are little-endian
IEEE-754 32-bit floats in base64, and a layer's tensors sit in the weight
store under ``<ref>.weight`` / ``<ref>.bias``.

The evaluator in this module is the importer's own reference semantics
for the format; imports are self-checked against the source runtime
before anything is written.
"""

from __future__ import annotations

import base64
import hashlib
import json

import numpy as np


class ImportError_(Exception):
    """Import failed; the message names the offending op or defect."""


SUPPORTED_KINDS = ("conv2d", "relu", "maxpool2d", "flatten", "linear")


def layer(kind: str, params: dict | None = None, weight_ref: str | None = None) -> dict:
    obj = {"kind": kind, "params": dict(params or {})}
    if weight_ref is not None:
        obj["weight_ref"] = weight_ref
    return obj


def weight_entry(values: np.ndarray) -> dict:
    arr = np.ascontiguousarray(values, dtype="<f4")
    return {
        "shape": [int(d) for d in arr.shape],
        "dtype": "f32",
        "data_b64": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def serialize(doc: dict) -> bytes:
    """Byte-canonical form: sorted keys, compact separators."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def digest(doc: dict) -> str:
    return hashlib.sha256(serialize(doc)).hexdigest()


def _weights_of(doc: dict, ref: str) -> tuple[np.ndarray, np.ndarray]:
    def decode(entry):
        raw = base64.b64decode(entry["data_b64"])
        return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(entry["shape"])

    return decode(doc["weights"][f"{ref}.weight"]), decode(doc["weights"][f"{ref}.bias"])


def evaluate(doc: dict, x: np.ndarray) -> np.ndarray:
    """Float forward pass over a model JSON document (float64)."""
    out = np.asarray(x, dtype=np.float64).reshape(doc["input_shape"])
    for spec in doc["layers"]:
        kind, params = spec["kind"], spec.get("params", {})
        if kind == "conv2d":
            w, b = _weights_of(doc, spec["weight_ref"])
            stride = params["stride"]
            k = params["kernel"]
            windows = np.lib.stride_tricks.sliding_window_view(out, (k, k), axis=(1, 2))
            windows = windows[:, ::stride, ::stride]
            out = np.tensordot(w, windows, axes=([1, 2, 3], [0, 3, 4])) + b[:, None, None]
        elif kind == "relu":
            out = np.maximum(out, 0.0)
        elif kind == "maxpool2d":
            win = params["window"]
            c, h, wd = out.shape
            out = out.reshape(c, h // win, win, wd // win, win).max(axis=(2, 4))
        elif kind == "flatten":
            out = out.reshape(-1)
        elif kind == "linear":
            w, b = _weights_of(doc, spec["weight_ref"])
            out = w @ out.reshape(-1) + b
        else:
            raise ImportError_(f"unsupported kind in document: {kind}")
    return out


def shape_check(doc: dict) -> tuple[int, ...]:
    """Walk the layer list symbolically; raises on inconsistency."""
    shape = tuple(int(d) for d in doc["input_shape"])
    for idx, spec in enumerate(doc["layers"]):
        kind, p = spec["kind"], spec.get("params", {})
        if kind == "conv2d":
            c, h, w = shape
            if c != p["in_channels"]:
                raise ImportError_(f"layer {idx}: channel mismatch {c} != {p['in_channels']}")
            k, s = p["kernel"], p["stride"]
            shape = (p["out_channels"], (h - k) // s + 1, (w - k) // s + 1)
        elif kind == "maxpool2d":
            c, h, w = shape
            if h % p["window"] or w % p["window"]:
                raise ImportError_(f"layer {idx}: pool window does not divide {h}x{w}")
            shape = (c, h // p["window"], w // p["window"])
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind == "linear":
            n = int(np.prod(shape))
            if n != p["in_features"]:
                raise ImportError_(f"layer {idx}: {n} features flow into linear({p['in_features']})")
            shape = (p["out_features"],)
        elif kind != "relu":
            raise ImportError_(f"unsupported kind {kind}")
    return shape


def random_lenet(seed: int) -> dict:
    """Seeded reference model: conv(3->6,k5) pool, conv(6->16,k5) pool,
    then 400->120->84->10 linears with relu between, fan-in scaled weights."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    weights = {
        "conv1.weight": uniform((6, 3, 5, 5), 75),
        "conv1.bias": uniform((6,), 75),
        "conv2.weight": uniform((16, 6, 5, 5), 150),
        "conv2.bias": uniform((16,), 150),
        "fc1.weight": uniform((120, 400), 400),
        "fc1.bias": uniform((120,), 400),
        "fc2.weight": uniform((84, 120), 120),
        "fc2.bias": uniform((84,), 120),
        "fc3.weight": uniform((10, 84), 84),
        "fc3.bias": uniform((10,), 84),
    }
    return {
        "input_shape": [3, 32, 32],
        "layers": [
            layer("conv2d", {"in_channels": 3, "out_channels": 6, "kernel": 5, "stride": 1}, "conv1"),
            layer("relu"),
            layer("maxpool2d", {"window": 2}),
            layer("conv2d", {"in_channels": 6, "out_channels": 16, "kernel": 5, "stride": 1}, "conv2"),
            layer("relu"),
            layer("maxpool2d", {"window": 2}),
            layer("linear", {"in_features": 400, "out_features": 120}, "fc1"),
            layer("relu"),
            layer("linear", {"in_features": 120, "out_features": 84}, "fc2"),
            layer("relu"),
            layer("linear", {"in_features": 84, "out_features": 10}, "fc3"),
        ],
        "weights": {key: weight_entry(arr) for key, arr in weights.items()},
    }
