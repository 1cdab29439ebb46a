"""Standalone converter from ONNX / PyTorch checkpoints to model JSON."""

from .importer import ImportManifest, generate_lenet, import_model, write_outputs
from .modeljson import ImportError_

__version__ = "0.1.0"

__all__ = [
    "ImportError_",
    "ImportManifest",
    "generate_lenet",
    "import_model",
    "write_outputs",
]
