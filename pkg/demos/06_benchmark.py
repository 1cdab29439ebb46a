#!/usr/bin/env python3
"""Stage timing and peak memory, full-model vs per-slice configuration."""

import numpy as np

from verislice import zoo
from verislice.adapt import AdaptConfig
from verislice.bench import run_benchmark
from verislice.model import plan_slices

model = zoo.random_lenet(seed=0)
plans = {
    "sliced": plan_slices(model, "lenet5"),
    "full": plan_slices(model, f"0-{model.n_layers}"),
}
inputs = [zoo.random_input(np.random.default_rng(s)) for s in range(10)]

report = run_benchmark(model, plans, AdaptConfig(16), inputs, interval_ms=10)
print(report.render_table())
print("environment:", report.environment["platform"])
print("note: stages run serially per input, sliced before full, so peaks attribute cleanly")
