"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines.  Tolerances are pinned in the assertions below; nothing is deferred
to later calibration.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from verislice import zoo
from verislice.adapt import (
    AdaptConfig,
    Witness,
    adapt_slice,
    dequantize_tensor,
    prepare_slices,
    quantize_tensor,
    rescale_boundary,
    run_adapted,
    witness_to_bytes,
)
from verislice.bench import run_benchmark
from verislice.metrics import discrepancy, fidelity_report, jsd, tvd
from verislice.model import extract_slice, plan_slices, run_float_inference
from verislice.pipeline import Node, execute_pipeline
from verislice.prover import ProofArtifact, ReferenceBackend
from verislice.tensor import FieldTensor, tensor_digest

DATA = Path(__file__).parent / "data"


def report_line(name: str, ok: bool, detail: str):
    print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'} [{name}] {detail}")
    assert ok, f"{name}: {detail}"


def adapted_logits(adapted, x):
    cur = quantize_tensor(x, adapted[0].scale_bits)
    for a in adapted:
        if cur.scale_bits != a.scale_bits:
            cur = rescale_boundary(cur, cur.scale_bits, a.scale_bits)
        cur = run_adapted(a, cur).output
    return cur


# ---------------------------------------------------------------------------
# 1. slicing exactness
# ---------------------------------------------------------------------------


def test_slicing_exactness_bit_identical():
    """20 seeded models x 70 inputs at global f=16: the 5-slice pipeline's
    integer logits equal the single-slice pipeline's, with 0 mismatches."""
    cfg = AdaptConfig(16)
    mismatches = 0
    runs = 0
    for model_seed in range(20):
        model = zoo.random_lenet(model_seed)
        plan5 = plan_slices(model, "lenet5")
        plan1 = plan_slices(model, "0-11")
        prepared5 = prepare_slices(model, plan5, cfg)
        prepared1 = prepare_slices(model, plan1, cfg)
        rng = np.random.default_rng(50_000 + model_seed)
        for _ in range(70):
            x = zoo.random_input(rng)
            r5 = execute_pipeline(model, plan5, cfg, x, prepared=prepared5)
            r1 = execute_pipeline(model, plan1, cfg, x, prepared=prepared1)
            runs += 1
            assert r5.accepted and r1.accepted
            if not np.array_equal(r5.final_logits_field.data, r1.final_logits_field.data):
                mismatches += 1
    report_line(
        "slicing-exactness",
        mismatches == 0,
        f"{runs} input runs on 20 models, {mismatches} logit mismatches (tolerance 0)",
    )


# ---------------------------------------------------------------------------
# 2. argmax invariance
# ---------------------------------------------------------------------------


def test_argmax_invariance():
    """f=16 adapted vs float predictions: >=99% agreement per seeded model,
    and 100% whenever the top-2 logit gap exceeds 2**-8.  Under a minute."""
    started = time.perf_counter()
    cfg = AdaptConfig(16)
    worst_rate = 1.0
    gap_violations = 0
    for model_seed in range(5):
        model = zoo.random_lenet(model_seed)
        adapted = prepare_slices(model, plan_slices(model, "lenet5"), cfg)
        rng = np.random.default_rng(60_000 + model_seed)
        agree = 0
        for _ in range(70):
            x = zoo.random_input(rng)
            zf = run_float_inference(model, x)
            zq = dequantize_tensor(adapted_logits(adapted, x))
            same = int(np.argmax(zf.data)) == int(np.argmax(zq.data))
            agree += int(same)
            top2 = np.sort(zf.data)[-2:]
            if (top2[1] - top2[0]) > 2.0**-8 and not same:
                gap_violations += 1
        worst_rate = min(worst_rate, agree / 70.0)
    elapsed = time.perf_counter() - started
    report_line(
        "argmax-invariance",
        worst_rate >= 0.99 and gap_violations == 0 and elapsed < 60.0,
        f"worst per-model agreement {worst_rate:.2%} (>=99%), "
        f"{gap_violations} disagreements above the 2^-8 gap, {elapsed:.1f}s (<60s)",
    )


# ---------------------------------------------------------------------------
# 3. fidelity ordering
# ---------------------------------------------------------------------------


def test_fidelity_ordering():
    """Per-slice scales >= global scale never raise mean D1 (within 1e-9),
    and mean D1 at f=16 is below mean D1 at f=8."""
    model = zoo.random_lenet(0)
    plan = plan_slices(model, "lenet5")
    rng = np.random.default_rng(77)
    xs = [zoo.random_input(rng) for _ in range(70)]
    zf = [run_float_inference(model, x) for x in xs]

    def mean_d1(cfg):
        adapted = prepare_slices(model, plan, cfg)
        values = [
            discrepancy(z, dequantize_tensor(adapted_logits(adapted, x)), p=1)
            for x, z in zip(xs, zf)
        ]
        return float(np.mean(values))

    d1_global8 = mean_d1(AdaptConfig(8))
    d1_global12 = mean_d1(AdaptConfig(12))
    d1_global16 = mean_d1(AdaptConfig(16))
    d1_equal = mean_d1(AdaptConfig(8, per_slice_scales={i: 8 for i in range(5)}))
    d1_lifted = mean_d1(AdaptConfig(8, per_slice_scales={i: 16 for i in range(5)}))
    d1_ascend = mean_d1(AdaptConfig(12, per_slice_scales={0: 12, 1: 13, 2: 14, 3: 15, 4: 16}))

    never_worse = (
        d1_equal <= d1_global8 + 1e-9
        and d1_lifted <= d1_global8 + 1e-9
        and d1_ascend <= d1_global12 + 1e-9
    )
    monotone = d1_global16 < d1_global8
    report_line(
        "fidelity-ordering",
        never_worse and monotone,
        f"per-slice(=8)={d1_equal:.3e} lifted(16)={d1_lifted:.3e} vs global8={d1_global8:.3e}; "
        f"ascend={d1_ascend:.3e} vs global12={d1_global12:.3e}; "
        f"f16={d1_global16:.3e} < f8={d1_global8:.3e}",
    )


# ---------------------------------------------------------------------------
# 4. metric oracle equivalence
# ---------------------------------------------------------------------------


def test_metric_oracle_equivalence():
    """D1/D2/TVD/JSD match brute-force formula evaluation within 1e-12 over
    10^4 random cases; bounds and symmetry hold; known JSD value checked."""

    def d_ref(a, b, p):
        return math.fsum(abs(x - y) ** p for x, y in zip(a, b))

    def tvd_ref(p, q):
        return 0.5 * math.fsum(abs(x - y) for x, y in zip(p, q))

    def jsd_ref(p, q):
        def kl(r, m):
            return math.fsum(ri * math.log2(ri / mi) for ri, mi in zip(r, m) if ri > 0)

        mid = [(x + y) / 2 for x, y in zip(p, q)]
        return 0.5 * kl(p, mid) + 0.5 * kl(q, mid)

    rng = np.random.default_rng(4242)
    worst = 0.0
    cases = 10_000
    for _ in range(cases):
        k = int(rng.integers(2, 16))
        a = rng.uniform(-10, 10, k)
        b = rng.uniform(-10, 10, k)
        p = rng.uniform(0, 1, k)
        p[int(rng.integers(0, k))] += 1e-6
        p = p / p.sum()
        q = rng.uniform(0, 1, k)
        q[int(rng.integers(0, k))] += 1e-6
        q = q / q.sum()

        t, j = tvd(p, q), jsd(p, q)
        worst = max(
            worst,
            abs(discrepancy(a, b, 1) - d_ref(a, b, 1)),
            abs(discrepancy(a, b, 2) - d_ref(a, b, 2)),
            abs(t - tvd_ref(p, q)),
            abs(j - jsd_ref(p, q)),
            abs(t - tvd(q, p)),
            abs(j - jsd(q, p)),
        )
        assert 0.0 <= t <= 1.0 and 0.0 <= j <= 1.0 + 1e-12

    known = jsd([0.5, 0.5], [1.0, 0.0])
    known_ok = abs(known - 0.311278) <= 1e-6
    report_line(
        "metric-oracle-equivalence",
        worst < 1e-12 and known_ok,
        f"{cases} cases, worst deviation {worst:.2e} (<1e-12), "
        f"jsd((.5,.5),(1,0))={known:.6f} (0.311278 +/- 1e-6)",
    )


# ---------------------------------------------------------------------------
# 5. prover completeness and soundness
# ---------------------------------------------------------------------------


class _TransitTamperNode(Node):
    def __init__(self, target):
        super().__init__("tamper")
        self.target = target

    def emit(self, w):
        out = super().emit(w)
        if w.slice_id != self.target:
            return out
        data = out.data.copy()
        data.reshape(-1)[0] += 1
        return FieldTensor(out.shape, data, out.scale_bits)


def test_prover_completeness_and_soundness():
    """100% of honest proofs verify; 100% of >=500 sampled single-element
    tamperings are rejected; every injected boundary corruption is caught."""
    backend = ReferenceBackend()
    cfg = AdaptConfig(16)
    rng = np.random.default_rng(99)

    # completeness: every honest (slice, input) pair verifies
    honest_total = 0
    honest_ok = 0
    for model_seed in range(3):
        model = zoo.random_lenet(model_seed)
        plan = plan_slices(model, "lenet5")
        adapted = prepare_slices(model, plan, cfg)
        shapes = [a.input_shape for a in adapted]
        for trial in range(5):
            for a, shape in zip(adapted, shapes):
                x = quantize_tensor(zoo.random_input(rng, shape), 16)
                w = run_adapted(a, x)
                artifact = backend.prove(a, w)
                outcome = backend.verify(
                    a, artifact, tensor_digest(w.input), tensor_digest(w.output)
                )
                honest_total += 1
                honest_ok += int(outcome.accepted)

    # soundness: single-element tamperings across input/trace/output/digests
    model = zoo.random_lenet(1)
    plan = plan_slices(model, "lenet5")
    adapted = prepare_slices(model, plan, cfg)
    tampered_total = 0
    tampered_rejected = 0

    def check_reject(a, artifact, claim_in, claim_out):
        nonlocal tampered_total, tampered_rejected
        outcome = backend.verify(a, artifact, claim_in, claim_out)
        tampered_total += 1
        tampered_rejected += int(not outcome.accepted)

    def bump(t, flat):
        data = t.data.copy().reshape(-1)
        data[flat] += 1
        return FieldTensor(t.shape, data.reshape(t.shape), t.scale_bits)

    for a in adapted:
        x = quantize_tensor(zoo.random_input(rng, a.input_shape), 16)
        w = run_adapted(a, x)
        artifact = backend.prove(a, w)
        claim_in, claim_out = tensor_digest(w.input), tensor_digest(w.output)

        per_tensor = 35
        positions = [
            ("input", i)
            for i in rng.choice(w.input.size, min(per_tensor, w.input.size), replace=False)
        ]
        for t_idx, t in enumerate(w.trace):
            positions += [
                (("trace", t_idx), i)
                for i in rng.choice(t.size, min(per_tensor, t.size), replace=False)
            ]
        for kind, flat in positions:
            if kind == "input":
                bad = Witness(w.slice_id, w.circuit_digest, bump(w.input, flat), w.trace, w.output)
            else:
                _, t_idx = kind
                trace = list(w.trace)
                trace[t_idx] = bump(trace[t_idx], flat)
                out = trace[-1] if t_idx == len(trace) - 1 else w.output
                bad = Witness(w.slice_id, w.circuit_digest, w.input, tuple(trace), out)
            check_reject(
                a,
                ProofArtifact(
                    artifact.backend_id, artifact.slice_id, artifact.circuit_digest,
                    artifact.input_digest, artifact.output_digest, witness_to_bytes(bad),
                ),
                claim_in, claim_out,
            )

        # digest tamperings: artifact fields and caller claims
        def flip(h):
            return ("0" if h[0] != "0" else "1") + h[1:]

        check_reject(a, ProofArtifact(artifact.backend_id, artifact.slice_id,
                                      flip(artifact.circuit_digest), artifact.input_digest,
                                      artifact.output_digest, artifact.payload),
                     claim_in, claim_out)
        check_reject(a, ProofArtifact(artifact.backend_id, artifact.slice_id,
                                      artifact.circuit_digest, flip(artifact.input_digest),
                                      artifact.output_digest, artifact.payload),
                     claim_in, claim_out)
        check_reject(a, ProofArtifact(artifact.backend_id, artifact.slice_id,
                                      artifact.circuit_digest, artifact.input_digest,
                                      flip(artifact.output_digest), artifact.payload),
                     claim_in, claim_out)
        check_reject(a, artifact, flip(claim_in), claim_out)
        check_reject(a, artifact, claim_in, flip(claim_out))

    # chain consistency: corrupt every boundary, every corruption is caught
    plan5 = plan_slices(model, "lenet5")
    boundary_total = 0
    boundary_caught = 0
    for boundary in range(plan5.n_slices - 1):
        for input_seed in range(3):
            record = execute_pipeline(
                model, plan5, cfg, zoo.random_input(np.random.default_rng(input_seed)),
                nodes={"tamper": _TransitTamperNode(boundary)},
            )
            boundary_total += 1
            caught = (not record.chain.consistent and record.chain.first_broken == boundary)
            boundary_caught += int(caught and not record.accepted)

    ok = (
        honest_ok == honest_total
        and tampered_rejected == tampered_total
        and tampered_total >= 500
        and boundary_caught == boundary_total
    )
    report_line(
        "prover-completeness-soundness",
        ok,
        f"honest {honest_ok}/{honest_total} accepted; "
        f"tampered {tampered_rejected}/{tampered_total} rejected (>=500); "
        f"boundary corruptions caught {boundary_caught}/{boundary_total}",
    )


# ---------------------------------------------------------------------------
# 6. report schema conformance
# ---------------------------------------------------------------------------


def test_report_schema_conformance():
    """Fidelity and bench reports carry exactly the mean/std/min/max rows
    and the full-vs-per-slice groupings pinned in the golden schema files."""
    model = zoo.random_lenet(0)
    plan5 = plan_slices(model, "lenet5")
    plan1 = plan_slices(model, "0-11")
    cfg = AdaptConfig(16)
    adapted = prepare_slices(model, plan5, cfg)
    rng = np.random.default_rng(5)

    pairs = []
    for i in range(4):
        x = zoo.random_input(rng)
        pairs.append(
            (f"in{i}", run_float_inference(model, x),
             dequantize_tensor(adapted_logits(adapted, x)))
        )
    fid_obj = fidelity_report(pairs).to_obj()
    fid_csv = fidelity_report(pairs).to_csv()
    golden_fid = json.loads((DATA / "fidelity_schema.json").read_text())

    fid_ok = (
        sorted(fid_obj.keys()) == golden_fid["top_level_keys"]
        and sorted(fid_obj["summary"].keys()) == golden_fid["summary_metrics"]
        and all(
            sorted(cell.keys()) == golden_fid["stat_rows"]
            for cell in fid_obj["summary"].values()
        )
        and fid_csv.splitlines()[0] == golden_fid["csv_header"]
    )

    inputs = [zoo.random_input(np.random.default_rng(s)) for s in range(2)]
    bench_obj = run_benchmark(
        model, {"sliced": plan5, "full": plan1}, cfg, inputs, interval_ms=5
    ).to_obj()
    golden_bench = json.loads((DATA / "bench_schema.json").read_text())

    times = bench_obj["time_seconds"]
    bench_ok = (
        sorted(bench_obj.keys()) == golden_bench["top_level_keys"]
        and sorted(times.keys()) == golden_bench["configs"]
        and all(sorted(times[c].keys()) == golden_bench["stages"] for c in times)
        and all(
            sorted(times["full"][stage].keys()) == golden_bench["time_rows_full"]
            for stage in golden_bench["stages"]
        )
        and all(
            sorted(times["sliced"][stage].keys()) == golden_bench["time_rows_sliced"]
            for stage in golden_bench["stages"]
        )
    )
    for config in golden_bench["configs"]:
        for stage in golden_bench["stages"]:
            for label, cell in times[config][stage].items():
                bench_ok = bench_ok and sorted(cell.keys()) == golden_bench["stat_rows"]
            mem = bench_obj["memory_bytes"][config][stage]
            bench_ok = bench_ok and sorted(mem.keys()) == golden_bench["memory_cells"]
            bench_ok = bench_ok and sorted(mem["rss"].keys()) == golden_bench["stat_rows"]

    report_line(
        "report-schema-conformance",
        fid_ok and bench_ok,
        f"fidelity schema {'ok' if fid_ok else 'MISMATCH'}, "
        f"bench schema {'ok' if bench_ok else 'MISMATCH'} (values ignored)",
    )


# ---------------------------------------------------------------------------
# 7. memory directionality
# ---------------------------------------------------------------------------


def test_memory_directionality():
    """Proof-stage peak RSS of the sliced run stays within 10% of (and
    directionally below) the full-inference run, per input, over >=10 inputs."""
    try:
        import psutil  # noqa: F401

        psutil.Process().memory_info().rss
    except Exception as exc:  # pragma: no cover - platform without RSS
        print(f"ACCEPTANCE SKIP [memory-directionality] no RSS queries: {exc}")
        pytest.skip("platform lacks RSS queries; reported, not guaranteed")

    model = zoo.random_lenet(0)
    plan5 = plan_slices(model, "lenet5")
    plan1 = plan_slices(model, "0-11")
    cfg = AdaptConfig(16)
    violations = 0
    checked = 0
    for seed in range(10):
        x = zoo.random_input(np.random.default_rng(seed))
        report = run_benchmark(
            model, {"sliced": plan5, "full": plan1}, cfg, [x], interval_ms=5
        )
        sliced_peak = report.memory_stats[("sliced", "proof")]["rss"].max
        full_peak = report.memory_stats[("full", "proof")]["rss"].max
        checked += 1
        if sliced_peak > full_peak * 1.10:
            violations += 1
    report_line(
        "memory-directionality",
        violations == 0 and checked >= 10,
        f"{checked} inputs, {violations} violations of sliced <= full*1.10 "
        f"on proof-stage peak RSS",
    )
