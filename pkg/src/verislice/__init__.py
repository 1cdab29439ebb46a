"""Sliced, fixed-point, per-segment verifiable inference for feedforward nets.

The package splits a chain-structured model into contiguous slices, adapts
each slice to fixed-point arithmetic, executes it with a full per-layer
trace, and proves/verifies each slice through a pluggable backend.  A
re-execution reference backend is included.  Fidelity metrics and a
timing/memory benchmark harness round out the toolkit.
"""

from .adapt import (
    AdaptConfig,
    AdaptedSlice,
    Witness,
    adapt_slice,
    dequantize_tensor,
    quantize_tensor,
    rescale_boundary,
    run_adapted,
)
from .errors import (
    FixedPointOverflowError,
    ModelFormatError,
    PipelineError,
    PlanError,
    ProofError,
    ShapeError,
    VerisliceError,
)
from .metrics import (
    FidelityReport,
    SummaryStats,
    argmax_agreement,
    discrepancy,
    fidelity_report,
    jsd,
    summarize,
    tvd,
)
from .model import (
    LayerSpec,
    ModelGraph,
    SliceManifest,
    SlicePlan,
    extract_slice,
    infer_shapes,
    parse_model,
    plan_slices,
    run_float_inference,
    serialize_model,
    validate_constraints,
)
from .pipeline import (
    RunRecord,
    check_chain,
    execute_pipeline,
    strategic_split,
)
from .prover import BackendDescriptor, ProofArtifact, ReferenceBackend, VerifyResult
from .tensor import FieldTensor, FloatTensor, argmax, conv2d, linear, maxpool2d, relu, softmax

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig",
    "AdaptedSlice",
    "BackendDescriptor",
    "FieldTensor",
    "FidelityReport",
    "FixedPointOverflowError",
    "FloatTensor",
    "LayerSpec",
    "ModelFormatError",
    "ModelGraph",
    "PipelineError",
    "PlanError",
    "ProofArtifact",
    "ProofError",
    "ReferenceBackend",
    "RunRecord",
    "ShapeError",
    "SliceManifest",
    "SlicePlan",
    "SummaryStats",
    "VerifyResult",
    "VerisliceError",
    "Witness",
    "adapt_slice",
    "argmax",
    "argmax_agreement",
    "check_chain",
    "conv2d",
    "dequantize_tensor",
    "discrepancy",
    "execute_pipeline",
    "extract_slice",
    "fidelity_report",
    "infer_shapes",
    "jsd",
    "linear",
    "maxpool2d",
    "parse_model",
    "plan_slices",
    "quantize_tensor",
    "relu",
    "rescale_boundary",
    "run_adapted",
    "run_float_inference",
    "serialize_model",
    "softmax",
    "strategic_split",
    "summarize",
    "tvd",
    "validate_constraints",
]
