"""Deterministic synthetic benchmark backend implementing the runner protocol.

Provides a hardware-free oracle: each primitive has a closed-form cost

    per_call = base * (N / 2^16)^alpha * (L / 10)^beta / min(threads, saturation)

and an execution busy-spins for the summed cost (optionally perturbed by a
bounded noise factor), so wall time, PMU events, and energy all scale with
modeled work. The closed form doubles as the expected value for the additive
performance model, which is what makes end-to-end closure testable.

Run as a child process via ``fheprof-synth`` or ``python -m fheprof.synthetic``.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import time
from dataclasses import dataclass
from typing import Mapping

from .errors import ProtocolError
from .protocol import (
    THREAD_ENV_VAR,
    RunnerInvocation,
    RunPhase,
    SelfReport,
    format_self_report,
    read_config_document,
)
from .registry import (
    AbstractionLevel,
    BenchmarkRegistry,
    BenchmarkSpec,
    CryptoConfig,
)

REFERENCE_RING_DIM = 1 << 16
REFERENCE_DEPTH = 10


@dataclass(frozen=True)
class SyntheticCostModel:
    """Closed-form per-primitive cost surface driving the synthetic backend."""

    base_costs: Mapping[str, float]
    ring_dim_exponent: float = 1.0
    depth_exponent: float = 1.0
    thread_saturation: int = 8
    noise_amplitude: float = 0.0
    setup_cost: float = 0.05

    def __post_init__(self):
        for name, cost in self.base_costs.items():
            if not cost > 0:
                raise ValueError(f"base cost for {name!r} must be > 0")
        if not 0 <= self.noise_amplitude <= 0.05:
            raise ValueError("noise_amplitude must be within [0, 0.05]")
        if self.thread_saturation < 1:
            raise ValueError("thread_saturation must be >= 1")
        if not self.setup_cost >= 0:
            raise ValueError("setup_cost must be >= 0")

    def per_call_seconds(self, primitive: str, config: CryptoConfig, threads: int) -> float:
        if primitive not in self.base_costs:
            raise ProtocolError(f"synthetic model has no primitive {primitive!r}")
        scale = (config.ring_dim / REFERENCE_RING_DIM) ** self.ring_dim_exponent
        scale *= (config.depth / REFERENCE_DEPTH) ** self.depth_exponent
        divisor = min(max(threads, 1), self.thread_saturation)
        return self.base_costs[primitive] * scale / divisor

    def roi_seconds(
        self, counts: Mapping[str, int], config: CryptoConfig, threads: int
    ) -> float:
        """Noise-free region-of-interest time for a manifest at a key."""
        return sum(
            count * self.per_call_seconds(name, config, threads)
            for name, count in counts.items()
            if count > 0
        )

    def to_dict(self) -> dict:
        return {
            "base_costs": dict(self.base_costs),
            "ring_dim_exponent": self.ring_dim_exponent,
            "depth_exponent": self.depth_exponent,
            "thread_saturation": self.thread_saturation,
            "noise_amplitude": self.noise_amplitude,
            "setup_cost": self.setup_cost,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SyntheticCostModel":
        return cls(
            base_costs={str(k): float(v) for k, v in data["base_costs"].items()},
            ring_dim_exponent=float(data.get("ring_dim_exponent", 1.0)),
            depth_exponent=float(data.get("depth_exponent", 1.0)),
            thread_saturation=int(data.get("thread_saturation", 8)),
            noise_amplitude=float(data.get("noise_amplitude", 0.0)),
            setup_cost=float(data.get("setup_cost", 0.05)),
        )


def _spin_for(seconds: float) -> float:
    """Busy-spin (not sleep) for the given duration; returns measured time."""
    start = time.perf_counter()
    if seconds <= 0:
        return 0.0
    deadline = start + seconds
    acc = 1.0
    now = start
    while now < deadline:
        # Arithmetic keeps the ALU busy so PMU/energy readings track work.
        acc = acc * 1.0000001 + 1e-9
        now = time.perf_counter()
    return now - start


def _counts_for(invocation_benchmark: str, reps: int, params: Mapping) -> dict[str, int]:
    manifest = params.get("manifest")
    if manifest:
        return {str(k): int(v) for k, v in manifest.items()}
    return {invocation_benchmark: reps}


def synthetic_execute(
    invocation: RunnerInvocation, model: SyntheticCostModel
) -> SelfReport:
    """Run one synthetic execution in-process and return its self-report.

    The child-process entry point (``main``) routes through this function,
    so in-process tests exercise the exact code the profiler measures.
    """
    doc = read_config_document(invocation.config_path)
    config = CryptoConfig.from_dict(doc["crypto"])
    params = doc.get("extra_params") or {}
    counts = _counts_for(invocation.benchmark, invocation.repetitions, params)

    # Simulated deserialization: touch the cached artifact when present.
    cache_dir = doc.get("cache_dir")
    if cache_dir:
        marker = os.path.join(cache_dir, "artifacts.bin")
        if os.path.exists(marker):
            with open(marker, "rb") as fh:
                fh.read()

    _spin_for(model.setup_cost)
    inner_roi = None
    if invocation.phase is RunPhase.FULL:
        roi = model.roi_seconds(counts, config, invocation.thread_count)
        if model.noise_amplitude > 0:
            roi *= 1.0 + random.uniform(-model.noise_amplitude, model.noise_amplitude)
        inner_roi = _spin_for(roi)

    return SelfReport(
        benchmark=invocation.benchmark,
        phase=invocation.phase,
        repetitions_executed=invocation.repetitions,
        inner_roi_seconds=inner_roi,
        dynamic_counts=counts,
    )


def synthetic_runner_command() -> str:
    """Executable string that re-enters this module as a child process."""
    return f"{sys.executable} -m fheprof.synthetic"


def synthetic_registry(
    model: SyntheticCostModel,
    config: CryptoConfig | None = None,
    composites: Mapping[str, Mapping[str, int]] | None = None,
) -> BenchmarkRegistry:
    """Registry of synthetic specs backed by the given cost model.

    Registers one primitive per model base cost plus optional composite
    microbenchmarks with fixed manifests. Per-call estimates come from the
    model's own closed form at each spec's default configuration.
    """
    config = config or CryptoConfig(16, 10, 4096)
    registry = BenchmarkRegistry()
    runner = synthetic_runner_command()
    model_doc = model.to_dict()
    for name in sorted(model.base_costs):
        registry.register(
            BenchmarkSpec(
                name=name,
                level=AbstractionLevel.PRIMITIVE,
                default_config=config,
                runner=runner,
                extra_params={
                    "synthetic_model": model_doc,
                    "per_call_estimate_s": model.per_call_seconds(name, config, 1),
                },
            )
        )
    for name, counts in (composites or {}).items():
        registry.register(
            BenchmarkSpec(
                name=name,
                level=AbstractionLevel.MICROBENCHMARK,
                default_config=config,
                runner=runner,
                extra_params={
                    "synthetic_model": model_doc,
                    "manifest": dict(counts),
                },
            ),
            manifest=counts,
        )
    return registry.finalize()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fheprof-synth", description="synthetic runner-protocol benchmark"
    )
    parser.add_argument("--benchmark", required=True)
    parser.add_argument("--phase", required=True, choices=["setup", "full"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--reps", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        doc = read_config_document(args.config)
        model_doc = (doc.get("extra_params") or {}).get("synthetic_model")
        if not model_doc:
            raise ProtocolError("config carries no synthetic_model parameters")
        model = SyntheticCostModel.from_dict(model_doc)
        invocation = RunnerInvocation(
            executable=synthetic_runner_command(),
            benchmark=args.benchmark,
            phase=RunPhase.parse(args.phase),
            config_path=args.config,
            thread_count=int(os.environ.get(THREAD_ENV_VAR, "1")),
            repetitions=args.reps,
        )
        report = synthetic_execute(invocation, model)
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # argument/config problems
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(format_self_report(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
