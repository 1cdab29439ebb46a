#!/usr/bin/env python3
"""Slice a bundled convolutional model into its five natural blocks."""

from pathlib import Path

from verislice.model import build_manifests, extract_slice, infer_shapes, parse_model, plan_slices

model_path = Path(__file__).resolve().parent.parent / "models" / "lenet5.json"
model = parse_model(model_path.read_bytes(), base_dir=model_path.parent)

print(f"model: {model.n_layers} layers, input {model.input_shape}")
for idx, (spec, shape) in enumerate(zip(model.layers, infer_shapes(model))):
    print(f"  layer {idx:2d} {spec.kind:10s} -> {shape}")

plan = plan_slices(model, "lenet5")
print(f"\npreset plan: {plan.describe()}")

for manifest in build_manifests(model, plan):
    sub = extract_slice(model, plan, manifest.slice_id)
    kinds = "+".join(s.kind for s in sub.layers)
    print(
        f"  slice {manifest.slice_id}: layers [{manifest.start},{manifest.end}) "
        f"{kinds:30s} {manifest.input_shape} -> {manifest.output_shape}"
    )

print("\nboundary expressions work too, e.g. one slice per layer:")
fine = plan_slices(model, ",".join(f"{i}-{i+1}" for i in range(model.n_layers)))
print(f"  {fine.n_slices} slices: {fine.describe()}")
