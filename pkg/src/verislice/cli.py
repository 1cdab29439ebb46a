"""Command-line driver: slice | adapt | run | prove | verify | fidelity | bench.

Exit code 0 means every requested operation succeeded; for run/verify it
additionally means all verifications accepted and the chain is consistent.
"""

from __future__ import annotations

import argparse
import base64
import concurrent.futures
import json
import sys
from pathlib import Path

import numpy as np

from .adapt import (
    AdaptConfig,
    dequantize_tensor,
    prepare_slices,
    quantize_tensor,
    rescale_boundary,
    run_adapted,
    witness_to_bytes,
)
from .bench import run_benchmark
from .errors import VerisliceError
from .metrics import fidelity_report
from .model import (
    ModelGraph,
    SlicePlan,
    build_manifests,
    extract_slice,
    model_to_obj,
    parse_model,
    plan_slices,
    run_float_inference,
    validate_constraints,
)
from .pipeline import execute_pipeline, save_run, strategic_split
from .prover import ProofArtifact, ReferenceBackend
from .tensor import FloatTensor, tensor_digest
from .zoo import random_input


def _load_model(path: str) -> ModelGraph:
    p = Path(path)
    return parse_model(p.read_bytes(), base_dir=p.parent)


def _plan_for(model: ModelGraph, args) -> SlicePlan:
    if getattr(args, "strategic", None):
        start, end = (int(v) for v in args.strategic.split("-", 1))
        return strategic_split(model, (start, end))
    if args.plan:
        return plan_slices(model, args.plan)
    return plan_slices(model, args.preset)


def _config_for(args) -> AdaptConfig:
    per_slice = None
    if getattr(args, "per_slice_scales", None):
        per_slice = {}
        for part in args.per_slice_scales.split(","):
            key, _, value = part.partition("=")
            per_slice[int(key)] = int(value)
    return AdaptConfig(scale_bits=args.scale_bits, per_slice_scales=per_slice)


def _load_input(path: str, model: ModelGraph) -> FloatTensor:
    p = Path(path)
    if p.suffix == ".json":
        values = np.asarray(json.loads(p.read_text()), dtype=np.float64)
        shape = values.shape if values.ndim > 1 else model.input_shape
        return FloatTensor(tuple(shape), values.reshape(shape))
    raw = np.frombuffer(p.read_bytes(), dtype="<f4").astype(np.float64)
    sidecar = p.with_suffix(p.suffix + ".shape")
    shape = tuple(json.loads(sidecar.read_text())) if sidecar.exists() else model.input_shape
    return FloatTensor(shape, raw.reshape(shape))


def _gather_inputs(args, model: ModelGraph) -> list[tuple[str, FloatTensor | str]]:
    """Returns (input_id, tensor) pairs; a string instead of a tensor is a
    load error to be carried into the per-input error report."""
    pairs: list[tuple[str, FloatTensor | str]] = []
    if args.inputs:
        for path in args.inputs:
            try:
                pairs.append((Path(path).name, _load_input(path, model)))
            except Exception as exc:
                pairs.append((Path(path).name, f"load failed: {exc}"))
        return pairs
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        pairs.append((f"seed{args.seed}_{i}", random_input(rng, model.input_shape)))
    return pairs


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_slice(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    report = validate_constraints(model, plan)
    if not report.ok:
        for violation in report.violations:
            print(violation, file=sys.stderr)
        return 1
    out = _out_dir(args)
    manifests = build_manifests(model, plan)
    for i in range(plan.n_slices):
        sub = extract_slice(model, plan, i)
        (out / f"slice_{i}.json").write_text(
            json.dumps(model_to_obj(sub), indent=2, sort_keys=True)
        )
    (out / "manifest.json").write_text(
        json.dumps({"plan": plan.describe(), "slices": [m.to_obj() for m in manifests]},
                   indent=2, sort_keys=True)
    )
    print(f"wrote {plan.n_slices} slices to {out}")
    return 0


def _adapted_to_obj(a) -> dict:
    return {
        "slice_id": a.slice_id,
        "scale_bits": a.scale_bits,
        "circuit_digest": a.circuit_digest,
        "input_shape": list(a.input_shape),
        "output_shape": list(a.output_shape),
        "layers": [
            {"kind": s.kind, "params": dict(s.params),
             **({"weight_ref": s.weight_ref} if s.weight_ref else {})}
            for s in a.layers
        ],
        "weights": {
            key: {
                "shape": list(t.shape),
                "dtype": "i64",
                "scale_bits": t.scale_bits,
                "data_b64": base64.b64encode(t.data.astype("<i8").tobytes()).decode("ascii"),
            }
            for key, t in sorted(a.weights.items())
        },
    }


def cmd_adapt(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    cfg = _config_for(args)
    out = _out_dir(args)
    adapted = prepare_slices(model, plan, cfg)
    manifests = build_manifests(model, plan)
    for a in adapted:
        (out / f"adapted_{a.slice_id}.json").write_text(
            json.dumps(_adapted_to_obj(a), indent=2, sort_keys=True)
        )
    index = [
        {**m.to_obj(), "circuit_digest": a.circuit_digest, "scale_bits": a.scale_bits}
        for m, a in zip(manifests, adapted)
    ]
    (out / "manifest.json").write_text(
        json.dumps({"plan": plan.describe(), "slices": index}, indent=2, sort_keys=True)
    )
    print(f"adapted {len(adapted)} slices at scales "
          f"{[a.scale_bits for a in adapted]} into {out}")
    return 0


def cmd_run(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    cfg = _config_for(args)
    if args.input:
        x = _load_input(args.input, model)
    else:
        x = random_input(np.random.default_rng(args.seed), model.input_shape)
    record = execute_pipeline(model, plan, cfg, x)
    run_dir = save_run(record, _out_dir(args))
    status = "accepted" if record.accepted else "REJECTED"
    print(f"{status}: class {record.predicted_class}, assurance {record.assurance}, "
          f"artifacts in {run_dir}")
    if not record.accepted:
        for rec in record.slices:
            if rec.verification is not None and not rec.verification.accepted:
                print(f"slice {rec.slice_id}: {rec.verification.reason}", file=sys.stderr)
        if not record.chain.consistent:
            print(f"chain broken at boundary {record.chain.first_broken}", file=sys.stderr)
    return 0 if record.accepted else 1


def cmd_prove(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    cfg = _config_for(args)
    backend = ReferenceBackend()
    if args.input:
        x = _load_input(args.input, model)
    else:
        x = random_input(np.random.default_rng(args.seed), model.input_shape)
    adapted = prepare_slices(model, plan, cfg)
    current = quantize_tensor(x, adapted[0].scale_bits)
    input_id = tensor_digest(current)[:12]
    run_dir = _out_dir(args) / input_id
    run_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for i, a in enumerate(adapted):
        if current.scale_bits != a.scale_bits:
            current = rescale_boundary(current, current.scale_bits, a.scale_bits)
        witness = run_adapted(a, current)
        (run_dir / f"slice_{i}.witness").write_bytes(witness_to_bytes(witness))
        entry = {
            "slice_id": i,
            "input_digest": tensor_digest(current),
            "output_digest": tensor_digest(witness.output),
            "proved": plan.proved(i),
        }
        if plan.proved(i):
            artifact = backend.prove(a, witness)
            (run_dir / f"slice_{i}.proof").write_bytes(artifact.to_bytes())
            entry["circuit_digest"] = artifact.circuit_digest
        index.append(entry)
        current = witness.output
    (run_dir / "proofs.json").write_text(
        json.dumps({"input_id": input_id, "plan": plan.describe(),
                    "scale_bits": [a.scale_bits for a in adapted], "slices": index},
                   indent=2, sort_keys=True)
    )
    print(f"proved {sum(1 for e in index if e['proved'])} slices into {run_dir}")
    return 0


def cmd_verify(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    cfg = _config_for(args)
    backend = ReferenceBackend()
    run_dir = Path(args.run_dir)
    record_path = run_dir / "record.json"
    index_path = run_dir / "proofs.json"
    if record_path.exists():
        doc = json.loads(record_path.read_text())
        claims = {int(s["slice_id"]): (s["input_digest"], s["output_digest"], s["proved"])
                  for s in doc["slices"]}
    elif index_path.exists():
        doc = json.loads(index_path.read_text())
        claims = {int(s["slice_id"]): (s["input_digest"], s["output_digest"], s["proved"])
                  for s in doc["slices"]}
    else:
        print(f"no record.json or proofs.json under {run_dir}", file=sys.stderr)
        return 1
    adapted = prepare_slices(model, plan, cfg)
    all_ok = True
    for i, a in enumerate(adapted):
        if i not in claims or not claims[i][2]:
            print(f"slice {i}: unproven (skipped)")
            continue
        proof_path = run_dir / f"slice_{i}.proof"
        if not proof_path.exists():
            print(f"slice {i}: proof file missing", file=sys.stderr)
            all_ok = False
            continue
        try:
            artifact = ProofArtifact.from_bytes(proof_path.read_bytes())
            outcome = backend.verify(a, artifact, claims[i][0], claims[i][1])
        except VerisliceError as exc:
            print(f"slice {i}: {exc}", file=sys.stderr)
            all_ok = False
            continue
        if outcome.accepted:
            print(f"slice {i}: accepted")
        else:
            print(f"slice {i}: rejected: {outcome.reason}", file=sys.stderr)
            all_ok = False
    return 0 if all_ok else 1


def _fidelity_one(model, adapted, item):
    input_id, x = item
    if isinstance(x, str):
        return input_id, None, x
    try:
        z_orig = run_float_inference(model, x)
        current = quantize_tensor(x, adapted[0].scale_bits)
        for a in adapted:
            if current.scale_bits != a.scale_bits:
                current = rescale_boundary(current, current.scale_bits, a.scale_bits)
            current = run_adapted(a, current).output
        z_circ = dequantize_tensor(current)
        return input_id, (z_orig, z_circ), None
    except VerisliceError as exc:
        return input_id, None, str(exc)


def cmd_fidelity(args) -> int:
    model = _load_model(args.model)
    plan = _plan_for(model, args)
    cfg = _config_for(args)
    adapted = prepare_slices(model, plan, cfg)
    items = _gather_inputs(args, model)

    results = []
    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda it: _fidelity_one(model, adapted, it), items))
    else:
        results = [_fidelity_one(model, adapted, it) for it in items]

    pairs = [(input_id, z[0], z[1]) for input_id, z, err in results if err is None]
    errors = [(input_id, err) for input_id, z, err in results if err is not None]
    if not pairs:
        print("no input produced logits", file=sys.stderr)
        return 1
    report = fidelity_report(
        pairs,
        metadata={"plan": plan.describe(), "scale_bits": args.scale_bits,
                  "per_slice_scales": args.per_slice_scales or None},
        errors=errors,
    )
    out = _out_dir(args)
    (out / "fidelity.csv").write_text(report.to_csv())
    (out / "fidelity.json").write_text(report.to_json())
    print(f"fidelity over {len(pairs)} inputs: mean D1 {report.summary['d1'].mean:.6g}, "
          f"argmax agreement {report.argmax_agreement_rate:.2%}")
    return 0


def cmd_bench(args) -> int:
    model = _load_model(args.model)
    cfg = _config_for(args)
    sliced_plan = plan_slices(model, args.plan or args.preset)
    full_plan = plan_slices(model, f"0-{model.n_layers}")
    plans = {}
    if args.config in ("both", "sliced"):
        plans["sliced"] = sliced_plan
    if args.config in ("both", "full"):
        plans["full"] = full_plan
    items = _gather_inputs(args, model)
    inputs = [x for _, x in items if not isinstance(x, str)] * args.repeat
    report = run_benchmark(model, plans, cfg, inputs, interval_ms=args.interval)
    out = _out_dir(args)
    (out / "bench.json").write_text(report.to_json())
    (out / "bench.csv").write_text(report.to_csv())
    (out / "bench.txt").write_text(report.render_table())
    print(report.render_table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="verislice",
        description="Slice a model, adapt it to fixed point, prove and verify "
        "each slice, and measure fidelity and runtime/memory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="model JSON path")
    common.add_argument("--plan", help="boundary expression, e.g. 0-3,3-6,6-11")
    common.add_argument("--preset", default="lenet5", help="plan preset name")
    common.add_argument("--scale-bits", type=int, default=16)
    common.add_argument("--per-slice-scales", help="per-slice scales, e.g. 0=16,1=14")
    common.add_argument("--out", default="out", help="output directory")

    batch = argparse.ArgumentParser(add_help=False)
    batch.add_argument("--inputs", nargs="*", help="input tensors (JSON or raw f32)")
    batch.add_argument("--seed", type=int, default=0, help="seed for generated inputs")
    batch.add_argument("--count", type=int, default=70, help="generated batch size")

    p = sub.add_parser("slice", parents=[common], help="split a model into slice files")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("adapt", parents=[common], help="quantize slices and emit digests")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("run", parents=[common], help="full pipeline on one input")
    p.add_argument("--input", help="input tensor path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategic", help="private layer range start-end; proves only it")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("prove", parents=[common], help="emit witnesses and proofs")
    p.add_argument("--input", help="input tensor path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategic", help="private layer range start-end")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("verify", parents=[common], help="re-verify stored proofs")
    p.add_argument("--run-dir", required=True, help="runs/<input_id> directory")
    p.add_argument("--strategic", help="private layer range start-end")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("fidelity", parents=[common, batch],
                       help="original vs adapted logits over a batch")
    p.add_argument("--jobs", type=int, default=1, help="concurrent per-input pipelines")
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("bench", parents=[common, batch],
                       help="stage timing and peak memory, full vs sliced")
    p.add_argument("--config", choices=("both", "full", "sliced"), default="both")
    p.add_argument("--interval", type=float, default=50, help="memory sampling ms")
    p.add_argument("--repeat", type=int, default=1, help="repetitions of the batch")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VerisliceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
