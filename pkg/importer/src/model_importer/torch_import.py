"""Map a serialized PyTorch Sequential checkpoint onto the model JSON format.

The checkpoint must contain a full pickled ``nn.Sequential`` (or a module
whose immediate children form one flat supported chain) built from
Conv2d / ReLU / MaxPool2d / Flatten / Linear.  Since checkpoints carry no
input geometry, the caller supplies the input shape.
"""

from __future__ import annotations

import numpy as np

from .modeljson import ImportError_, layer, weight_entry

RECURRENT_MODULES = ("RNN", "LSTM", "GRU", "RNNCell", "LSTMCell", "GRUCell")


def _pair(value) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        return int(value[0]), int(value[1])
    return int(value), int(value)


def convert_module(module, input_shape) -> tuple[dict, list[dict]]:
    import torch.nn as nn

    children = list(module.children()) if not isinstance(module, nn.Sequential) else list(module)
    if isinstance(module, (nn.Conv2d, nn.Linear)):
        children = [module]
    if not children:
        raise ImportError_("checkpoint module has no child layers")

    layers: list[dict] = []
    weights: dict[str, dict] = {}
    mapping: list[dict] = []

    def next_is_linear(index: int) -> bool:
        return index + 1 < len(children) and isinstance(children[index + 1], nn.Linear)

    for index, child in enumerate(children):
        cls = type(child).__name__
        if cls in RECURRENT_MODULES:
            raise ImportError_(f"unsupported: recurrence ({cls})")
        if isinstance(child, nn.Conv2d):
            kh, kw = _pair(child.kernel_size)
            sh, sw = _pair(child.stride)
            ph, pw = _pair(child.padding) if not isinstance(child.padding, str) else (-1, -1)
            if kh != kw or sh != sw:
                raise ImportError_(f"layer {index}: anisotropic conv unsupported")
            if (ph, pw) != (0, 0):
                raise ImportError_(f"layer {index}: conv padding unsupported")
            if _pair(child.dilation) != (1, 1) or child.groups != 1:
                raise ImportError_(f"layer {index}: dilation/groups unsupported")
            ref = f"conv{index}"
            w = child.weight.detach().cpu().numpy()
            b = (child.bias.detach().cpu().numpy() if child.bias is not None
                 else np.zeros(w.shape[0], dtype=np.float32))
            layers.append(layer("conv2d", {
                "in_channels": int(child.in_channels),
                "out_channels": int(child.out_channels),
                "kernel": kh, "stride": sh,
            }, ref))
            weights[f"{ref}.weight"] = weight_entry(w)
            weights[f"{ref}.bias"] = weight_entry(b)
            kind = "conv2d"
        elif isinstance(child, nn.ReLU):
            layers.append(layer("relu"))
            kind = "relu"
        elif isinstance(child, nn.MaxPool2d):
            kh, kw = _pair(child.kernel_size)
            sh, sw = _pair(child.stride if child.stride is not None else child.kernel_size)
            if kh != kw or (sh, sw) != (kh, kw) or _pair(child.padding) != (0, 0):
                raise ImportError_(f"layer {index}: only non-overlapping unpadded pooling")
            layers.append(layer("maxpool2d", {"window": kh}))
            kind = "maxpool2d"
        elif isinstance(child, nn.Flatten):
            if child.start_dim not in (0, 1):
                raise ImportError_(f"layer {index}: Flatten start_dim unsupported")
            # folded away when feeding a linear layer: the target format
            # flattens implicitly there
            if next_is_linear(index):
                mapping.append({"node": f"{index}", "op": cls, "kind": "flatten",
                                "folded": True})
                continue
            layers.append(layer("flatten"))
            kind = "flatten"
        elif isinstance(child, nn.Linear):
            ref = f"fc{index}"
            w = child.weight.detach().cpu().numpy()
            b = (child.bias.detach().cpu().numpy() if child.bias is not None
                 else np.zeros(w.shape[0], dtype=np.float32))
            layers.append(layer("linear", {
                "in_features": int(child.in_features),
                "out_features": int(child.out_features),
            }, ref))
            weights[f"{ref}.weight"] = weight_entry(w)
            weights[f"{ref}.bias"] = weight_entry(b)
            kind = "linear"
        else:
            raise ImportError_(f"unsupported op: {cls}")
        mapping.append({"node": f"{index}", "op": cls, "kind": kind})

    doc = {
        "input_shape": [int(d) for d in input_shape],
        "layers": layers,
        "weights": weights,
    }
    return doc, mapping


def load_checkpoint(path):
    try:
        import torch
    except ImportError as exc:  # pragma: no cover
        raise ImportError_("PyTorch is required to read checkpoint files") from exc
    try:
        module = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise ImportError_(f"cannot unpickle checkpoint: {exc}") from exc
    if not hasattr(module, "forward"):
        raise ImportError_("checkpoint does not contain a module (state_dicts need the "
                           "original class; save the full module instead)")
    return module.eval()


def evaluate_source(module, x: np.ndarray) -> np.ndarray:
    import torch

    with torch.no_grad():
        out = module(torch.from_numpy(np.asarray(x, dtype=np.float32))[None, ...])
    return out.numpy().reshape(-1).astype(np.float64)
