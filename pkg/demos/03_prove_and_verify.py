#!/usr/bin/env python3
"""Prove each slice's execution and verify the whole chained run."""

from verislice import zoo
from verislice.adapt import AdaptConfig
from verislice.model import plan_slices
from verislice.pipeline import execute_pipeline
from verislice.prover import ReferenceBackend

backend = ReferenceBackend()
d = backend.descriptor()
print(f"backend {d.backend_id!r}: zero_knowledge={d.zero_knowledge}, "
      f"prime_field={d.supports_prime_field}")
print("(a transparent re-execution verifier; real proving systems plug in "
      "behind the same prove/verify interface)\n")

model = zoo.random_lenet(seed=0)
plan = plan_slices(model, "lenet5")
record = execute_pipeline(model, plan, AdaptConfig(16), zoo.random_input(3), backend=backend)

for s in record.slices:
    print(f"slice {s.slice_id}: node={s.node_id} "
          f"verify={'accept' if s.verification.accepted else s.verification.reason}")
    print(f"  in  {s.input_digest[:20]}...")
    print(f"  out {s.output_digest[:20]}...")

print(f"\nchain consistent: {record.chain.consistent}")
print(f"assurance: {record.assurance}  (per-slice proofs, not one end-to-end proof)")
print(f"accepted: {record.accepted}, predicted class: {record.predicted_class}")
