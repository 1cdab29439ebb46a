"""Seeded model and input generators used by demos, tests, and the CLI."""

from __future__ import annotations

import numpy as np

from .model import LayerSpec, ModelGraph
from .tensor import FloatTensor


def lenet5_layers() -> tuple[LayerSpec, ...]:
    """The classic 11-layer conv/pool/linear stack for 3x32x32 inputs.

    The pooled 16x5x5 activation feeds the first linear layer directly;
    flattening happens inside the linear kernel.
    """
    return (
        LayerSpec("conv2d", {"in_channels": 3, "out_channels": 6, "kernel": 5, "stride": 1}, "conv1"),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("conv2d", {"in_channels": 6, "out_channels": 16, "kernel": 5, "stride": 1}, "conv2"),
        LayerSpec("relu"),
        LayerSpec("maxpool2d", {"window": 2}),
        LayerSpec("linear", {"in_features": 400, "out_features": 120}, "fc1"),
        LayerSpec("relu"),
        LayerSpec("linear", {"in_features": 120, "out_features": 84}, "fc2"),
        LayerSpec("relu"),
        LayerSpec("linear", {"in_features": 84, "out_features": 10}, "fc3"),
    )


def _uniform_f32(rng: np.random.Generator, shape: tuple[int, ...], bound: float) -> FloatTensor:
    # Drawn as float32 so model JSON round-trips bit-exactly.
    values = rng.uniform(-bound, bound, size=shape).astype(np.float32).astype(np.float64)
    return FloatTensor(shape, values)


def random_lenet(seed: int = 0) -> ModelGraph:
    """LeNet-shaped model with fan-in-scaled uniform weights, deterministic per seed."""
    rng = np.random.default_rng(seed)
    layers = lenet5_layers()
    weights: dict[str, FloatTensor] = {}
    for spec in layers:
        if spec.kind == "conv2d":
            p = spec.params
            fan_in = p["in_channels"] * p["kernel"] * p["kernel"]
            shape = (p["out_channels"], p["in_channels"], p["kernel"], p["kernel"])
            bound = 1.0 / np.sqrt(fan_in)
            weights[spec.weight_key()] = _uniform_f32(rng, shape, bound)
            weights[spec.bias_key()] = _uniform_f32(rng, (p["out_channels"],), bound)
        elif spec.kind == "linear":
            p = spec.params
            bound = 1.0 / np.sqrt(p["in_features"])
            weights[spec.weight_key()] = _uniform_f32(rng, (p["out_features"], p["in_features"]), bound)
            weights[spec.bias_key()] = _uniform_f32(rng, (p["out_features"],), bound)
    return ModelGraph((3, 32, 32), layers, weights)


def random_input(rng: np.random.Generator | int, shape: tuple[int, ...] = (3, 32, 32)) -> FloatTensor:
    """Uniform [0, 1) input tensor, float32-representable."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    values = rng.uniform(0.0, 1.0, size=shape).astype(np.float32).astype(np.float64)
    return FloatTensor(tuple(shape), values)


def random_chain(seed: int = 0) -> ModelGraph:
    """Small random conv/pool/linear chain; handy for property tests."""
    rng = np.random.default_rng(seed)
    c = int(rng.integers(1, 4))
    h = int(rng.integers(6, 13)) * 2
    k = int(rng.integers(2, 4))
    o = int(rng.integers(1, 5))
    layers = [
        LayerSpec("conv2d", {"in_channels": c, "out_channels": o, "kernel": k, "stride": 1}, "c0"),
        LayerSpec("relu"),
    ]
    conv_h = h - k + 1
    shape: tuple[int, ...] = (o, conv_h, conv_h)
    if conv_h % 2 == 0:
        layers.append(LayerSpec("maxpool2d", {"window": 2}))
        shape = (o, conv_h // 2, conv_h // 2)
    n = int(np.prod(shape))
    out = int(rng.integers(2, 8))
    layers.append(LayerSpec("linear", {"in_features": n, "out_features": out}, "l0"))
    weights = {
        "c0.weight": _uniform_f32(rng, (o, c, k, k), 1.0 / np.sqrt(c * k * k)),
        "c0.bias": _uniform_f32(rng, (o,), 1.0 / np.sqrt(c * k * k)),
        "l0.weight": _uniform_f32(rng, (out, n), 1.0 / np.sqrt(n)),
        "l0.bias": _uniform_f32(rng, (out,), 1.0 / np.sqrt(n)),
    }
    return ModelGraph((c, h, h), tuple(layers), weights)
