#!/usr/bin/env python3
"""Prove only a chosen private range; run the public remainder digest-logged."""

from verislice import zoo
from verislice.adapt import AdaptConfig
from verislice.model import plan_slices
from verislice.pipeline import execute_pipeline, strategic_split

model = zoo.random_lenet(seed=0)
x = zoo.random_input(5)
cfg = AdaptConfig(16)

# protect only the final classification layer
plan = strategic_split(model, (10, 11))
print(f"strategic plan: {plan.describe()} with roles {plan.roles}")
record = execute_pipeline(model, plan, cfg, x)
proofs = [s.slice_id for s in record.slices if s.artifact is not None]
print(f"proof artifacts emitted for slices {proofs} only")
print(f"assurance: {record.assurance}, accepted: {record.accepted}")

# the prediction matches the fully proved pipeline bit for bit
full = execute_pipeline(model, plan_slices(model, "lenet5"), cfg, x)
same = record.final_logits_field == full.final_logits_field
print(f"\nlogits identical to the all-proved run: {same}")
print(f"predicted class: {record.predicted_class}")

# a middle range works too, with public head and tail
middle = strategic_split(model, (6, 8))
print(f"\nmiddle-range plan: {middle.describe()} roles {middle.roles}")
rec2 = execute_pipeline(model, middle, cfg, x)
print(f"proofs: {[s.slice_id for s in rec2.slices if s.artifact is not None]}, "
      f"boundaries digest-logged: {len(rec2.boundaries)}")
