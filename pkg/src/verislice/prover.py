"""Pluggable proving-backend interface and the re-execution reference backend.

A backend consumes an adapted slice plus a witness and emits a proof
artifact binding three digests: the circuit, the input tensor, and the
output tensor.  Verification checks the artifact against the digests the
caller claims, not against anything the artifact asserts about itself.

The reference backend is deliberately transparent: its payload is the full
witness, and verification re-executes every layer.  It declares
``zero_knowledge=False``; it exists to exercise the interface, the artifact
shape, and the failure taxonomy, not to provide cryptographic hiding.

Artifact file format: u32 little-endian header length, canonical JSON
header ``{backend_id, slice_id, circuit_digest, input_digest,
output_digest}`` (hex digests, lowercase), then the backend payload bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .adapt import AdaptedSlice, Witness, run_adapted, witness_from_bytes, witness_to_bytes
from .errors import ProofError
from .tensor import tensor_digest


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    supports_prime_field: bool
    zero_knowledge: bool


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str | None = None

    @classmethod
    def accept(cls) -> "VerifyResult":
        return cls(True, None)

    @classmethod
    def reject(cls, reason: str) -> "VerifyResult":
        return cls(False, reason)

    def __bool__(self) -> bool:
        return self.accepted


@dataclass(frozen=True)
class ProofArtifact:
    """Backend output binding (circuit, input, output) digests to a payload."""

    backend_id: str
    slice_id: int
    circuit_digest: str
    input_digest: str
    output_digest: str
    payload: bytes

    def to_bytes(self) -> bytes:
        header = json.dumps(
            {
                "backend_id": self.backend_id,
                "slice_id": self.slice_id,
                "circuit_digest": self.circuit_digest,
                "input_digest": self.input_digest,
                "output_digest": self.output_digest,
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode()
        return np.array([len(header)], dtype="<u4").tobytes() + header + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "ProofArtifact":
        try:
            (hlen,) = np.frombuffer(buf, dtype="<u4", count=1, offset=0)
            header = json.loads(buf[4 : 4 + int(hlen)])
            payload = bytes(buf[4 + int(hlen) :])
            return cls(
                backend_id=str(header["backend_id"]),
                slice_id=int(header["slice_id"]),
                circuit_digest=str(header["circuit_digest"]),
                input_digest=str(header["input_digest"]),
                output_digest=str(header["output_digest"]),
                payload=payload,
            )
        except ProofError:
            raise
        except Exception as exc:
            raise ProofError(f"artifact malformed: {exc}") from exc


class ReferenceBackend:
    """Re-execution verifier with digest commitments; not zero-knowledge."""

    backend_id = "reexec"

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(
            backend_id=self.backend_id,
            supports_prime_field=False,
            zero_knowledge=False,
        )

    def prove(self, s: AdaptedSlice, w: Witness) -> ProofArtifact:
        """Package a witness into an artifact.  The witness must be
        structurally sound and belong to this circuit; its computational
        correctness is the verifier's job."""
        if w.circuit_digest != s.circuit_digest:
            raise ProofError(
                f"witness circuit digest {w.circuit_digest[:12]}... does not match "
                f"slice {s.slice_id} circuit {s.circuit_digest[:12]}..."
            )
        if len(w.trace) != s.n_layers:
            raise ProofError(
                f"witness trace has {len(w.trace)} entries for a {s.n_layers}-layer slice"
            )
        if w.output != w.trace[-1]:
            raise ProofError("witness output differs from its final trace entry")
        return ProofArtifact(
            backend_id=self.backend_id,
            slice_id=s.slice_id,
            circuit_digest=s.circuit_digest,
            input_digest=tensor_digest(w.input),
            output_digest=tensor_digest(w.output),
            payload=witness_to_bytes(w),
        )

    def verify(
        self,
        s: AdaptedSlice,
        p: ProofArtifact,
        claimed_input_digest: str,
        claimed_output_digest: str,
    ) -> VerifyResult:
        """Re-execute the payload witness and check every binding.

        All failures are structured rejects; this method does not raise.
        """
        if p.backend_id != self.backend_id:
            return VerifyResult.reject(f"foreign backend {p.backend_id!r}")
        if p.circuit_digest != s.circuit_digest:
            return VerifyResult.reject("circuit digest mismatch")
        try:
            w = witness_from_bytes(p.payload)
        except ProofError as exc:
            return VerifyResult.reject(f"payload malformed: {exc}")
        if w.circuit_digest != s.circuit_digest:
            return VerifyResult.reject("payload circuit digest mismatch")
        if w.slice_id != p.slice_id:
            return VerifyResult.reject("payload slice id mismatch")
        if len(w.trace) != s.n_layers:
            return VerifyResult.reject(
                f"trace length {len(w.trace)} != {s.n_layers} layers"
            )

        input_digest = tensor_digest(w.input)
        if input_digest != p.input_digest:
            return VerifyResult.reject("input digest mismatch (payload vs artifact)")
        if input_digest != claimed_input_digest:
            return VerifyResult.reject("input digest mismatch")

        try:
            honest = run_adapted(s, w.input)
        except Exception as exc:
            return VerifyResult.reject(f"re-execution failed: {exc}")
        for idx, (got, want) in enumerate(zip(w.trace, honest.trace)):
            if got != want:
                return VerifyResult.reject(f"trace mismatch at layer {idx}")
        if w.output != honest.output:
            return VerifyResult.reject("output mismatch")

        output_digest = tensor_digest(w.output)
        if output_digest != p.output_digest:
            return VerifyResult.reject("output digest mismatch (payload vs artifact)")
        if output_digest != claimed_output_digest:
            return VerifyResult.reject("output digest mismatch")
        return VerifyResult.accept()


def default_backend() -> ReferenceBackend:
    return ReferenceBackend()
