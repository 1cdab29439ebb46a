#!/usr/bin/env python3
"""Two ways a worker can cheat, and which check catches each one."""

from verislice import zoo
from verislice.adapt import AdaptConfig, Witness
from verislice.model import plan_slices
from verislice.pipeline import Node, execute_pipeline
from verislice.tensor import FieldTensor

model = zoo.random_lenet(seed=0)
plan = plan_slices(model, "lenet5")
cfg = AdaptConfig(16)
x = zoo.random_input(11)


class LiesInTheProof(Node):
    """Corrupts its computed output, then proves the corrupted trace."""

    def execute(self, s, inp):
        w = super().execute(s, inp)
        if s.slice_id != 2:
            return w
        data = w.output.data.copy()
        data[0] += 1
        bad = FieldTensor(w.output.shape, data, w.output.scale_bits)
        return Witness(w.slice_id, w.circuit_digest, w.input, w.trace[:-1] + (bad,), bad)


class LiesDownstream(Node):
    """Computes and proves honestly, then forwards a corrupted activation."""

    def emit(self, w):
        out = super().emit(w)
        if w.slice_id != 2:
            return out
        data = out.data.copy()
        data[-1] += 1
        return FieldTensor(out.shape, data, out.scale_bits)


for name, node in (("proof tampering", LiesInTheProof("evil")),
                   ("transit tampering", LiesDownstream("evil"))):
    record = execute_pipeline(model, plan, cfg, x, nodes={"evil": node})
    v = record.slices[2].verification
    print(f"{name}:")
    print(f"  slice 2 verification: {'accept' if v.accepted else 'reject: ' + v.reason}")
    print(f"  chain consistent:     {record.chain.consistent}"
          + ("" if record.chain.consistent else f" (broken at boundary {record.chain.first_broken})"))
    print(f"  run accepted:         {record.accepted}\n")

honest = execute_pipeline(model, plan, cfg, x)
print(f"honest run for comparison: accepted={honest.accepted}, "
      f"chain consistent={honest.chain.consistent}")
