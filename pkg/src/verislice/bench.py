"""Wall-clock and peak-memory measurement for witness/proof/verification stages.

Timing is inclusive: a stage boundary wraps everything the stage needs,
including adaptation, quantization, and serialization.  Memory is sampled
by a background thread polling the process's resident set size (and swap,
where the platform exposes it) at a fixed interval; the sample records the
running maximum over the stage window.

Within one input the stages run strictly one after another, and the sliced
configuration runs before the unsliced one, so that the resident-set
high-water mark of the big monolithic stage cannot be attributed to a
slice.  Benchmarks never overlap pipeline instances.
"""

from __future__ import annotations

import json
import platform
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import psutil

from .adapt import AdaptConfig, prepare_slices, quantize_tensor, rescale_boundary, run_adapted
from .errors import VerisliceError
from .metrics import SummaryStats, summarize
from .model import ModelGraph, SlicePlan
from .prover import ReferenceBackend
from .tensor import FloatTensor, tensor_digest

STAGES = ("witness", "proof", "verification")
TOTAL = "Total"


@dataclass(frozen=True)
class StageTiming:
    stage: str
    config: str
    slice_id: int | None
    seconds: float
    started_at: float
    ended_at: float


class StageFailure(VerisliceError):
    """A timed action raised; the elapsed time is preserved on the error."""

    def __init__(self, timing: StageTiming, cause: BaseException):
        super().__init__(f"{timing.stage} stage failed after {timing.seconds:.6f}s: {cause}")
        self.timing = timing
        self.cause = cause


def time_stage(
    action: Callable[[], object],
    stage: str,
    config: str = "",
    slice_id: int | None = None,
) -> tuple[object, StageTiming]:
    """Run one stage action, returning its result and the inclusive timing."""
    start_wall = time.time()
    start = time.perf_counter()
    try:
        result = action()
    except BaseException as exc:
        end = time.perf_counter()
        timing = StageTiming(stage, config, slice_id, end - start, start_wall, time.time())
        raise StageFailure(timing, exc) from exc
    end = time.perf_counter()
    return result, StageTiming(stage, config, slice_id, end - start, start_wall, time.time())


# ---------------------------------------------------------------------------
# memory sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemorySample:
    stage: str
    config: str
    peak_rss_bytes: int | None
    baseline_rss_bytes: int | None
    peak_swap_bytes: int | None
    samples: int
    interval_ms: float
    warning: str | None = None

    @property
    def sum_bytes(self) -> int | None:
        if self.peak_rss_bytes is None or self.peak_swap_bytes is None:
            return None
        return self.peak_rss_bytes + self.peak_swap_bytes


def _read_swap_bytes() -> int | None:
    # Linux exposes per-process swap in /proc/self/status; elsewhere this
    # is best-effort and reported as unavailable.
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmSwap:"):
                    return int(line.split()[1]) * 1024
    except OSError:
        return None
    return None


class _Sampler(threading.Thread):
    def __init__(self, interval_s: float):
        super().__init__(daemon=True)
        self._interval = interval_s
        self._halt = threading.Event()
        self._proc = psutil.Process()
        self.peak_rss = 0
        self.peak_swap: int | None = None
        self.count = 0

    def poll_once(self):
        rss = self._proc.memory_info().rss
        self.peak_rss = max(self.peak_rss, rss)
        swap = _read_swap_bytes()
        if swap is not None:
            self.peak_swap = max(self.peak_swap or 0, swap)
        self.count += 1

    def run(self):
        while not self._halt.wait(self._interval):
            self.poll_once()

    def stop(self):
        self._halt.set()


def sample_memory(
    action: Callable[[], object],
    stage: str = "",
    config: str = "",
    interval_ms: float = 50,
) -> tuple[object, MemorySample]:
    """Run an action under a concurrent peak-memory sampler.

    If the sampler cannot start, the action still runs and the sample is
    returned unmeasured with a warning.
    """
    try:
        sampler = _Sampler(interval_ms / 1000.0)
        sampler.poll_once()
        baseline = sampler.peak_rss
        sampler.start()
    except Exception as exc:  # sampler failure must not block the stage
        result = action()
        return result, MemorySample(
            stage, config, None, None, None, 0, interval_ms,
            warning=f"memory sampler unavailable: {exc}",
        )
    try:
        result = action()
    finally:
        sampler.stop()
        sampler.join()
        sampler.poll_once()
    return result, MemorySample(
        stage=stage,
        config=config,
        peak_rss_bytes=sampler.peak_rss,
        baseline_rss_bytes=baseline,
        peak_swap_bytes=sampler.peak_swap,
        samples=sampler.count,
        interval_ms=interval_ms,
    )


# ---------------------------------------------------------------------------
# the benchmark driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchReport:
    """Per (config, stage, slice) timing and per (config, stage) memory stats."""

    time_stats: Mapping[tuple[str, str, str], SummaryStats]
    memory_stats: Mapping[tuple[str, str], Mapping[str, SummaryStats | None]]
    environment: Mapping[str, object]
    errors: tuple[tuple[str, str], ...] = ()

    def to_obj(self) -> dict:
        time_obj: dict = {}
        for (config, stage, label), stats in sorted(self.time_stats.items()):
            time_obj.setdefault(config, {}).setdefault(stage, {})[label] = stats.to_obj()
        mem_obj: dict = {}
        for (config, stage), cells in sorted(self.memory_stats.items()):
            mem_obj.setdefault(config, {})[stage] = {
                name: (stats.to_obj() if stats is not None else None)
                for name, stats in cells.items()
            }
        return {
            "time_seconds": time_obj,
            "memory_bytes": mem_obj,
            "environment": dict(self.environment),
            "errors": [{"input_id": i, "message": m} for i, m in self.errors],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = ["kind,config,stage,row,metric,mean,std,min,max"]
        for (config, stage, label), s in sorted(self.time_stats.items()):
            lines.append(
                f"time,{config},{stage},{label},seconds,{s.mean!r},{s.std!r},{s.min!r},{s.max!r}"
            )
        for (config, stage), cells in sorted(self.memory_stats.items()):
            for name, s in cells.items():
                if s is None:
                    continue
                lines.append(
                    f"memory,{config},{stage},{TOTAL},{name},{s.mean!r},{s.std!r},{s.min!r},{s.max!r}"
                )
        return "\n".join(lines) + "\n"

    def render_table(self) -> str:
        """Human-readable view grouped the way the memory/runtime tables read."""
        out = []
        cfg_names = {"full": "Full Inference", "sliced": "Per-slice"}
        out.append("runtime (seconds)")
        for stage in STAGES:
            for config in ("full", "sliced"):
                rows = [
                    (label, s)
                    for (cfg, stg, label), s in sorted(self.time_stats.items())
                    if cfg == config and stg == stage
                ]
                if not rows:
                    continue
                out.append(f"  {cfg_names.get(config, config)} {stage.capitalize()}")
                out.append(f"    {'row':<10} {'mean':>12} {'std':>12} {'min':>12} {'max':>12}")
                for label, s in rows:
                    out.append(
                        f"    {label:<10} {s.mean:>12.6f} {s.std:>12.6f} {s.min:>12.6f} {s.max:>12.6f}"
                    )
        out.append("peak memory (megabytes)")
        mb = 1024.0 * 1024.0
        for stage in STAGES:
            for config in ("full", "sliced"):
                cells = self.memory_stats.get((config, stage))
                if not cells:
                    continue
                out.append(f"  {cfg_names.get(config, config)} {stage.capitalize()}")
                out.append(f"    {'stat':<6} {'RAM':>12} {'Swap':>12} {'Sum':>12}")
                rss, swap, total = cells.get("rss"), cells.get("swap"), cells.get("sum")
                for stat in ("mean", "std", "min", "max"):
                    def cell(s):
                        return f"{getattr(s, stat) / mb:>12.3f}" if s is not None else f"{'--':>12}"
                    out.append(f"    {stat:<6} {cell(rss)} {cell(swap)} {cell(total)}")
        return "\n".join(out) + "\n"


def _environment(interval_ms: float) -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": psutil.cpu_count(logical=True),
        "sampling_interval_ms": interval_ms,
        "memory_attribution": "allocated column unpopulated; external sampling only",
    }


def run_benchmark(
    model: ModelGraph,
    plans: Mapping[str, SlicePlan],
    cfg: AdaptConfig,
    inputs: Sequence[FloatTensor],
    interval_ms: float = 50,
    backend: ReferenceBackend | None = None,
) -> BenchReport:
    """Measure witness/proof/verification per input for each configuration.

    ``plans`` maps config names (conventionally ``full`` and ``sliced``) to
    slice plans.  Stages run serially per input; per-input failures are
    recorded and the batch continues.
    """
    if not inputs:
        raise ValueError("benchmark needs a non-empty input batch")
    backend = backend or ReferenceBackend()
    # Sliced before full within every input: see the module note on
    # resident-set attribution.
    config_order = sorted(plans, key=lambda name: 0 if name != "full" else 1)

    times: dict[tuple[str, str, str], list[float]] = {}
    memories: dict[tuple[str, str], dict[str, list[int]]] = {}
    errors: list[tuple[str, str]] = []

    def add_time(config, stage, label, seconds):
        times.setdefault((config, stage, label), []).append(seconds)

    def add_memory(config, stage, sample: MemorySample):
        cells = memories.setdefault((config, stage), {"rss": [], "swap": [], "sum": []})
        if sample.peak_rss_bytes is not None:
            cells["rss"].append(sample.peak_rss_bytes)
        if sample.peak_swap_bytes is not None:
            cells["swap"].append(sample.peak_swap_bytes)
        if sample.sum_bytes is not None:
            cells["sum"].append(sample.sum_bytes)

    for index, x in enumerate(inputs):
        input_id = f"input_{index}"
        for config in config_order:
            plan = plans[config]
            sliced = plan.n_slices > 1
            try:
                _bench_one(
                    model, plan, cfg, x, backend, config, sliced,
                    interval_ms, add_time, add_memory,
                )
            except VerisliceError as exc:
                errors.append((input_id, f"{config}: {exc}"))

    time_stats = {key: summarize(vals) for key, vals in times.items()}
    memory_stats = {
        key: {
            name: (summarize(vals) if vals else None)
            for name, vals in cells.items()
        }
        for key, cells in memories.items()
    }
    return BenchReport(
        time_stats=time_stats,
        memory_stats=memory_stats,
        environment=_environment(interval_ms),
        errors=tuple(errors),
    )


def _bench_one(model, plan, cfg, x, backend, config, sliced, interval_ms, add_time, add_memory):
    state: dict = {}

    def witness_stage():
        adapted = prepare_slices(model, plan, cfg)
        current = quantize_tensor(x, adapted[0].scale_bits)
        witnesses = []
        for i, a in enumerate(adapted):
            if current.scale_bits != a.scale_bits:
                current = rescale_boundary(current, current.scale_bits, a.scale_bits)
            digest_in = tensor_digest(current)

            def run_one(a=a, current=current):
                return run_adapted(a, current)

            w, timing = time_stage(run_one, "witness", config, slice_id=i)
            if sliced:
                add_time(config, "witness", f"Slice {i + 1}", timing.seconds)
            witnesses.append((a, w, digest_in, tensor_digest(w.output)))
            current = w.output
        state["witnesses"] = witnesses

    (_, mem_w), total_w = time_stage(
        lambda: sample_memory(witness_stage, "witness", config, interval_ms),
        "witness", config,
    )
    add_memory(config, "witness", mem_w)
    add_time(config, "witness", TOTAL, total_w.seconds)

    def proof_stage():
        artifacts = []
        for i, (a, w, d_in, d_out) in enumerate(state["witnesses"]):
            p, timing = time_stage(lambda a=a, w=w: backend.prove(a, w), "proof", config, slice_id=i)
            if sliced:
                add_time(config, "proof", f"Slice {i + 1}", timing.seconds)
            artifacts.append(p)
        state["artifacts"] = artifacts

    (_, mem_p), total_p = time_stage(
        lambda: sample_memory(proof_stage, "proof", config, interval_ms),
        "proof", config,
    )
    add_memory(config, "proof", mem_p)
    add_time(config, "proof", TOTAL, total_p.seconds)

    def verify_stage():
        outcomes = []
        for i, ((a, w, d_in, d_out), p) in enumerate(zip(state["witnesses"], state["artifacts"])):
            v, timing = time_stage(
                lambda a=a, p=p, d_in=d_in, d_out=d_out: backend.verify(a, p, d_in, d_out),
                "verification", config, slice_id=i,
            )
            if sliced:
                add_time(config, "verification", f"Slice {i + 1}", timing.seconds)
            outcomes.append(v)
        if not all(v.accepted for v in outcomes):
            raise VerisliceError("benchmark verification rejected an honest proof")

    (_, mem_v), total_v = time_stage(
        lambda: sample_memory(verify_stage, "verification", config, interval_ms),
        "verification", config,
    )
    add_memory(config, "verification", mem_v)
    add_time(config, "verification", TOTAL, total_v.seconds)
