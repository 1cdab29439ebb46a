#!/usr/bin/env python3
"""Adapt slices to fixed point and watch quantization error shrink with scale."""

import numpy as np

from verislice import zoo
from verislice.adapt import (
    AdaptConfig,
    dequantize_tensor,
    prepare_slices,
    quantize_tensor,
    run_adapted,
)
from verislice.model import plan_slices, run_float_inference

model = zoo.random_lenet(seed=0)
plan = plan_slices(model, "lenet5")
x = zoo.random_input(7)
z_float = run_float_inference(model, x)


def circuit_logits(scale_bits):
    adapted = prepare_slices(model, plan, AdaptConfig(scale_bits))
    cur = quantize_tensor(x, scale_bits)
    for a in adapted:
        cur = run_adapted(a, cur).output
    return dequantize_tensor(cur)


print("float logits:   ", np.array2string(z_float.data, precision=5))
print()
print("scale bits | max |float - adapted| over the 10 logits")
for f in (4, 8, 12, 16, 20):
    z_circ = circuit_logits(f)
    err = np.abs(z_float.data - z_circ.data).max()
    print(f"      f={f:2d} | {err:.3e}")

adapted = prepare_slices(model, plan, AdaptConfig(16))
witness = run_adapted(adapted[0], quantize_tensor(x, 16))
print()
print(f"slice 0 witness: input {witness.input.shape}, "
      f"{len(witness.trace)} trace tensors, output {witness.output.shape}")
print(f"circuit digest:  {witness.circuit_digest[:32]}...")
