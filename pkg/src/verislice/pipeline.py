"""Per-input pipeline: slice assignment, stagewise execution, chain auditing.

One pipeline instance runs the slices of a single input strictly in order
(they are data dependent); distinct inputs may run as concurrent
instances.  Nodes are logical in-process workers behind a tiny interface,
which is also the seam used by fault-injection tests.

Every boundary between consecutive slices is digest-logged twice: once
from the proven witness output (rescaled into the receiving slice's
scale) and once from the tensor that actually flowed onward.  The chain
check compares the two columns; together with per-slice verification it
forms the run's acceptance predicate.  The record keeps an explicit
``assurance`` field so a set of per-slice proofs is never mistaken for a
single end-to-end proof.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .adapt import (
    AdaptConfig,
    AdaptedSlice,
    Witness,
    prepare_slices,
    quantize_tensor,
    dequantize_tensor,
    rescale_boundary,
    run_adapted,
)
from .errors import PipelineError, PlanError, ProofError, VerisliceError
from .model import (
    ModelGraph,
    ROLE_PRIVATE,
    ROLE_PUBLIC_POST,
    ROLE_PUBLIC_PRE,
    SlicePlan,
    model_digest,
    validate_constraints,
)
from .prover import ProofArtifact, ReferenceBackend, VerifyResult
from .tensor import FieldTensor, FloatTensor, argmax, tensor_digest


class Node:
    """A logical worker that executes one adapted slice at a time.

    ``execute`` produces the witness; ``emit`` hands the output tensor
    onward.  Subclasses in tests override one or the other to model a
    dishonest worker corrupting its proof or its downstream message.
    """

    def __init__(self, node_id: str = "local"):
        self.node_id = node_id

    def execute(self, s: AdaptedSlice, x: FieldTensor) -> Witness:
        return run_adapted(s, x)

    def emit(self, w: Witness) -> FieldTensor:
        return w.output


@dataclass(frozen=True)
class BoundaryRecord:
    """Digest pair for the handoff between slice ``index`` and ``index+1``."""

    index: int
    output_digest: str  # proven output of slice index, in the receiving scale
    input_digest: str  # tensor actually delivered to slice index+1


@dataclass(frozen=True)
class ChainResult:
    consistent: bool
    first_broken: int | None = None


def check_chain(boundaries: Sequence[BoundaryRecord]) -> ChainResult:
    """Audit boundary digests; a single slice is vacuously consistent."""
    for rec in boundaries:
        if rec.output_digest != rec.input_digest:
            return ChainResult(False, rec.index)
    return ChainResult(True, None)


@dataclass(frozen=True)
class SliceRunRecord:
    slice_id: int
    node_id: str
    proved: bool
    input_digest: str
    output_digest: str
    artifact: ProofArtifact | None
    verification: VerifyResult | None


ASSURANCE_PER_SLICE = "per-slice-proved"
ASSURANCE_STRATEGIC = "strategically-proved"
ASSURANCE_UNPROVEN = "unproven"


@dataclass(frozen=True)
class RunRecord:
    """Everything one pipeline run produced, minus the raw tensors."""

    input_id: str
    model_digest: str
    plan: str
    roles: tuple[str, ...] | None
    scale_bits: tuple[int, ...]
    slices: tuple[SliceRunRecord, ...]
    boundaries: tuple[BoundaryRecord, ...]
    chain: ChainResult
    final_logits_field: FieldTensor
    final_logits: FloatTensor
    predicted_class: int
    assurance: str
    accepted: bool
    witnesses: tuple[Witness, ...] = field(repr=False, compare=False, default=())

    def to_obj(self) -> dict:
        return {
            "input_id": self.input_id,
            "model_digest": self.model_digest,
            "plan": self.plan,
            "roles": list(self.roles) if self.roles is not None else None,
            "scale_bits": list(self.scale_bits),
            "assurance": self.assurance,
            "accepted": self.accepted,
            "predicted_class": self.predicted_class,
            "final_logits_int": [str(int(v)) for v in self.final_logits_field.data],
            "final_logits": [float(v) for v in self.final_logits.data],
            "final_scale_bits": self.final_logits_field.scale_bits,
            "chain": {
                "consistent": self.chain.consistent,
                "first_broken": self.chain.first_broken,
            },
            "boundaries": [
                {
                    "index": b.index,
                    "output_digest": b.output_digest,
                    "input_digest": b.input_digest,
                }
                for b in self.boundaries
            ],
            "slices": [
                {
                    "slice_id": s.slice_id,
                    "node_id": s.node_id,
                    "proved": s.proved,
                    "input_digest": s.input_digest,
                    "output_digest": s.output_digest,
                    "verification": (
                        None
                        if s.verification is None
                        else {"accepted": s.verification.accepted, "reason": s.verification.reason}
                    ),
                    "artifact": (
                        None
                        if s.artifact is None
                        else {
                            "backend_id": s.artifact.backend_id,
                            "circuit_digest": s.artifact.circuit_digest,
                            "input_digest": s.artifact.input_digest,
                            "output_digest": s.artifact.output_digest,
                            "payload_bytes": len(s.artifact.payload),
                        }
                    ),
                }
                for s in self.slices
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)


def _default_nodes() -> dict[str, Node]:
    return {"local": Node("local")}


def execute_pipeline(
    model: ModelGraph,
    plan: SlicePlan,
    cfg: AdaptConfig,
    x: FloatTensor,
    backend: ReferenceBackend | None = None,
    nodes: Mapping[str, Node] | None = None,
    assignment: Mapping[int, str] | None = None,
    input_id: str | None = None,
    prepared: Sequence[AdaptedSlice] | None = None,
) -> RunRecord:
    """Run every slice in order: execute, prove, verify, audit the chain.

    Verification rejections are recorded, not raised; hard execution
    failures abort with the slice index in the message.
    """
    report = validate_constraints(model, plan)
    if not report.ok:
        raise PipelineError("plan rejected: " + "; ".join(report.violations))

    if nodes is None:
        nodes = _default_nodes()
    if assignment is None:
        default_id = next(iter(nodes))
        assignment = {i: default_id for i in range(plan.n_slices)}
    missing = [i for i in range(plan.n_slices) if i not in assignment]
    if missing:
        raise PipelineError(f"assignment misses slices {missing}")
    unknown = sorted({assignment[i] for i in range(plan.n_slices)} - set(nodes))
    if unknown:
        raise PipelineError(f"assignment names unknown nodes {unknown}")

    backend = backend or ReferenceBackend()
    adapted = list(prepared) if prepared is not None else prepare_slices(model, plan, cfg)
    if len(adapted) != plan.n_slices:
        raise PipelineError("prepared slices do not match the plan")

    current = quantize_tensor(x, adapted[0].scale_bits)
    if input_id is None:
        input_id = tensor_digest(current)[:12]

    slice_records: list[SliceRunRecord] = []
    boundaries: list[BoundaryRecord] = []
    witnesses: list[Witness] = []

    for i, a in enumerate(adapted):
        node = nodes[assignment[i]]
        sent_digest = tensor_digest(current)
        try:
            witness = node.execute(a, current)
            received = node.emit(witness)
        except VerisliceError as exc:
            raise PipelineError(f"slice {i} failed: {exc}") from exc
        received_digest = tensor_digest(received)
        witnesses.append(witness)

        artifact = None
        verification = None
        if plan.proved(i):
            try:
                artifact = backend.prove(a, witness)
            except ProofError as exc:
                raise PipelineError(f"slice {i} failed: {exc}") from exc
            verification = backend.verify(a, artifact, sent_digest, received_digest)

        slice_records.append(
            SliceRunRecord(
                slice_id=i,
                node_id=node.node_id,
                proved=plan.proved(i),
                input_digest=sent_digest,
                output_digest=received_digest,
                artifact=artifact,
                verification=verification,
            )
        )

        if i + 1 < len(adapted):
            to_f = adapted[i + 1].scale_bits
            try:
                proven_handoff = rescale_boundary(witness.output, a.scale_bits, to_f)
                current = rescale_boundary(received, a.scale_bits, to_f)
            except VerisliceError as exc:
                raise PipelineError(f"slice {i} failed at boundary: {exc}") from exc
            boundaries.append(
                BoundaryRecord(
                    index=i,
                    output_digest=tensor_digest(proven_handoff),
                    input_digest=tensor_digest(current),
                )
            )
        else:
            current = received

    chain = check_chain(boundaries)
    proved_count = sum(1 for r in slice_records if r.proved)
    if proved_count == len(slice_records):
        assurance = ASSURANCE_PER_SLICE
    elif proved_count:
        assurance = ASSURANCE_STRATEGIC
    else:
        assurance = ASSURANCE_UNPROVEN
    accepted = chain.consistent and all(
        r.verification.accepted for r in slice_records if r.proved
    )

    final_field = current
    final_float = dequantize_tensor(final_field)
    return RunRecord(
        input_id=input_id,
        model_digest=model_digest(model),
        plan=plan.describe(),
        roles=plan.roles,
        scale_bits=tuple(a.scale_bits for a in adapted),
        slices=tuple(slice_records),
        boundaries=tuple(boundaries),
        chain=chain,
        final_logits_field=final_field,
        final_logits=final_float,
        predicted_class=argmax(final_float),
        assurance=assurance,
        accepted=accepted,
        witnesses=tuple(witnesses),
    )


def strategic_split(model: ModelGraph, private_range: tuple[int, int]) -> SlicePlan:
    """Three-way plan around a contiguous private layer range.

    Public head and tail may be empty; only the private slice is proven,
    the public slices run unproven but digest-logged.
    """
    start, end = int(private_range[0]), int(private_range[1])
    n = model.n_layers
    if start >= end:
        raise PlanError("private range is empty")
    if start < 0 or end > n:
        raise PlanError(f"private range [{start},{end}) outside [0,{n})")
    bounds: list[tuple[int, int]] = []
    roles: list[str] = []
    if start > 0:
        bounds.append((0, start))
        roles.append(ROLE_PUBLIC_PRE)
    bounds.append((start, end))
    roles.append(ROLE_PRIVATE)
    if end < n:
        bounds.append((end, n))
        roles.append(ROLE_PUBLIC_POST)
    return SlicePlan(tuple(bounds), tuple(roles))


def save_run(record: RunRecord, out_dir: Path | str) -> Path:
    """Write ``runs/<input_id>/slice_<k>.{witness,proof}`` plus record.json."""
    from .adapt import witness_to_bytes

    run_dir = Path(out_dir) / record.input_id
    run_dir.mkdir(parents=True, exist_ok=True)
    for i, w in enumerate(record.witnesses):
        (run_dir / f"slice_{i}.witness").write_bytes(witness_to_bytes(w))
    for rec in record.slices:
        if rec.artifact is not None:
            (run_dir / f"slice_{rec.slice_id}.proof").write_bytes(rec.artifact.to_bytes())
    (run_dir / "record.json").write_text(record.to_json())
    return run_dir
