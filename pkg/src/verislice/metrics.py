"""Fidelity and divergence measures between original and adapted outputs.

All comparisons run at the logit level (coordinate-wise discrepancy) or at
the softmax level (total variation distance, Jensen-Shannon divergence
with base-2 logs).  Summary statistics use the population standard
deviation; reports record that choice in their metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ShapeError
from .tensor import FloatTensor, argmax, softmax

_DIST_TOL = 1e-9


def _as_vector(v, name: str) -> np.ndarray:
    arr = v.data if isinstance(v, FloatTensor) else np.asarray(v, dtype=np.float64)
    arr = arr.reshape(-1).astype(np.float64)
    if arr.size == 0:
        raise ShapeError(f"{name} must be non-empty")
    return arr


def discrepancy(z_orig, z_circ, p: int = 1, normalize: bool = False) -> float:
    """Coordinate-wise p-power deviation between two logit vectors.

    Returns sum_j |a_j - b_j|**p for p in {1, 2}; no 1/k normalization by
    default, pass ``normalize=True`` to compare across output widths.
    """
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")
    a = _as_vector(z_orig, "z_orig")
    b = _as_vector(z_circ, "z_circ")
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    total = float(np.sum(np.abs(a - b) ** p))
    return total / a.size if normalize else total


def _check_distribution(arr: np.ndarray, name: str):
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    if abs(float(arr.sum()) - 1.0) > _DIST_TOL:
        raise ValueError(f"{name} sums to {float(arr.sum())}, not 1")


def tvd(p, q) -> float:
    """Total variation distance between two probability vectors: 0.5*sum|p-q|."""
    a = _as_vector(p, "P")
    b = _as_vector(q, "Q")
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    _check_distribution(a, "P")
    _check_distribution(b, "Q")
    return 0.5 * float(np.sum(np.abs(a - b)))


def jsd(p, q) -> float:
    """Jensen-Shannon divergence, base 2, in [0, 1].

    Computed in the midpoint form; terms with p_i = 0 contribute zero, so
    disjoint supports stay finite and reach the maximum of 1.
    """
    a = _as_vector(p, "P")
    b = _as_vector(q, "Q")
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    _check_distribution(a, "P")
    _check_distribution(b, "Q")
    m = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(a > 0, a * np.log2(np.where(a > 0, 2 * a / np.where(m > 0, m, 1), 1)), 0.0)
        right = np.where(b > 0, b * np.log2(np.where(b > 0, 2 * b / np.where(m > 0, m, 1), 1)), 0.0)
    return 0.5 * float(np.sum(left)) + 0.5 * float(np.sum(right))


def argmax_agreement(z_orig, z_circ) -> bool:
    """Whether both logit vectors elect the same class.

    Checked on the softmax outputs and cross-checked against raw-logit
    argmax, which must coincide because softmax is monotone.
    """
    a = FloatTensor.of(_as_vector(z_orig, "z_orig"))
    b = FloatTensor.of(_as_vector(z_circ, "z_circ"))
    if a.size != b.size:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    soft = argmax(softmax(a)) == argmax(softmax(b))
    raw = argmax(a) == argmax(b)
    assert soft == raw, "softmax argmax diverged from raw logit argmax"
    return soft


@dataclass(frozen=True)
class SummaryStats:
    """Population statistics of a batch of values."""

    mean: float
    std: float
    min: float
    max: float

    def to_obj(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


def summarize(values: Sequence[float]) -> SummaryStats:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty list")
    return SummaryStats(
        mean=float(arr.mean()),
        std=float(arr.std()),
        min=float(arr.min()),
        max=float(arr.max()),
    )


# ---------------------------------------------------------------------------
# fidelity reports
# ---------------------------------------------------------------------------

FIDELITY_METRICS = ("d1", "d2", "tvd", "jsd")


@dataclass(frozen=True)
class FidelityRow:
    input_id: str
    d1: float
    d2: float
    tvd: float
    jsd: float
    argmax_agree: bool


@dataclass(frozen=True)
class FidelityReport:
    """Per-input fidelity metrics plus mean/std/min/max summaries."""

    rows: tuple[FidelityRow, ...]
    summary: Mapping[str, SummaryStats]
    argmax_agreement_rate: float
    metadata: Mapping[str, object]
    errors: tuple[tuple[str, str], ...] = ()

    def to_csv(self) -> str:
        lines = ["input_id,d1,d2,tvd,jsd,argmax_agree"]
        for r in self.rows:
            lines.append(
                f"{r.input_id},{r.d1!r},{r.d2!r},{r.tvd!r},{r.jsd!r},{int(r.argmax_agree)}"
            )
        for input_id, message in self.errors:
            lines.append(f"{input_id},error,error,error,error,{json.dumps(message)}")
        return "\n".join(lines) + "\n"

    def to_obj(self) -> dict:
        return {
            "summary": {name: self.summary[name].to_obj() for name in FIDELITY_METRICS},
            "argmax_agreement_rate": self.argmax_agreement_rate,
            "inputs": len(self.rows),
            "metadata": dict(self.metadata),
            "errors": [{"input_id": i, "message": m} for i, m in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)


def fidelity_report(
    pairs: Sequence[tuple[str, FloatTensor, FloatTensor]],
    metadata: Mapping[str, object] | None = None,
    errors: Sequence[tuple[str, str]] = (),
) -> FidelityReport:
    """Build a report from (input_id, original logits, adapted logits) triples."""
    if not pairs:
        raise ValueError("fidelity report needs at least one input")
    rows = []
    for input_id, z_orig, z_circ in pairs:
        p_orig, p_circ = softmax(z_orig), softmax(z_circ)
        rows.append(
            FidelityRow(
                input_id=input_id,
                d1=discrepancy(z_orig, z_circ, p=1),
                d2=discrepancy(z_orig, z_circ, p=2),
                tvd=tvd(p_orig, p_circ),
                jsd=jsd(p_orig, p_circ),
                argmax_agree=argmax_agreement(z_orig, z_circ),
            )
        )
    meta = {"std": "population"}
    meta.update(metadata or {})
    return FidelityReport(
        rows=tuple(rows),
        summary={
            name: summarize([getattr(r, name) for r in rows]) for name in FIDELITY_METRICS
        },
        argmax_agreement_rate=float(np.mean([r.argmax_agree for r in rows])),
        metadata=meta,
        errors=tuple(errors),
    )
