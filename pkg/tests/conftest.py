from __future__ import annotations

import time
from datetime import datetime, timezone
from pathlib import Path

import pytest
import yaml

from fheprof.profiler import MeasurementRecord, SubprocessRunner, Profiler
from fheprof.protocol import RunPhase
from fheprof.registry import BenchmarkRegistry, CryptoConfig
from fheprof.synthetic import SyntheticCostModel, synthetic_registry, synthetic_runner_command

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def registry() -> BenchmarkRegistry:
    return BenchmarkRegistry.builtin()


@pytest.fixture
def config() -> CryptoConfig:
    return CryptoConfig(log2_ring_dim=16, depth=10, batch_size=4096)


class FakePerfCounterEnergy:
    """Deterministic energy source: a fixed-wattage wall-clock integrator."""

    def __init__(self, watts: float = 50.0):
        self.watts = watts

    def read_joules(self) -> float:
        return time.perf_counter() * self.watts

    def delta_joules(self, before: float, after: float) -> float:
        return after - before


@pytest.fixture
def fake_energy_profiler() -> Profiler:
    runner = SubprocessRunner(energy_reader=FakePerfCounterEnergy(), detect_energy=False)
    return Profiler(runner=runner)


def make_record(
    wall: float,
    energy: float | None = None,
    events: dict[str, float] | None = None,
    phase: RunPhase = RunPhase.FULL,
    benchmark: str = "bench",
    threads: int = 1,
    run_index: int = 0,
    config: CryptoConfig | None = None,
) -> MeasurementRecord:
    return MeasurementRecord(
        benchmark=benchmark,
        phase=phase,
        config=config or CryptoConfig(16, 10, 4096),
        thread_count=threads,
        wall_time=wall,
        energy=energy,
        event_counts=dict(events or {}),
        run_index=run_index,
        timestamp=datetime(2025, 1, 1, tzinfo=timezone.utc),
        exit_status=0,
    )


def write_registry_dir(
    root: Path,
    model: SyntheticCostModel,
    composites: dict[str, dict[str, int]] | None = None,
    config: CryptoConfig | None = None,
) -> Path:
    """Materialize a synthetic registry as an on-disk data directory."""
    config = config or CryptoConfig(16, 10, 4096)
    bench_dir = root / "benchmarks"
    bench_dir.mkdir(parents=True, exist_ok=True)
    runner = synthetic_runner_command()
    model_doc = model.to_dict()
    for i, name in enumerate(sorted(model.base_costs)):
        doc = {
            "name": name,
            "level": "primitive",
            "runner": runner,
            "default_config": config.to_dict(),
            "extra_params": {
                "synthetic_model": model_doc,
                "per_call_estimate_s": model.per_call_seconds(name, config, 1),
            },
        }
        (bench_dir / f"prim{i}.yaml").write_text(yaml.safe_dump(doc))
    for i, (name, counts) in enumerate(sorted((composites or {}).items())):
        doc = {
            "name": name,
            "level": "microbenchmark",
            "runner": runner,
            "default_config": config.to_dict(),
            "extra_params": {"synthetic_model": model_doc, "manifest": counts},
            "manifest": counts,
        }
        (bench_dir / f"micro{i}.yaml").write_text(yaml.safe_dump(doc))
    (root / "security_standards.yaml").write_text(
        yaml.safe_dump({"128-bit": {13: 3, 14: 7, 15: 16, 16: 34, 17: 69}})
    )
    return root


@pytest.fixture
def fast_model() -> SyntheticCostModel:
    return SyntheticCostModel(
        base_costs={"EvalAdd": 0.002, "EvalMult": 0.006, "EvalRotate": 0.005},
        setup_cost=0.02,
    )


@pytest.fixture
def fast_registry(fast_model):
    return synthetic_registry(
        fast_model,
        composites={"combo": {"EvalAdd": 40, "EvalMult": 15, "EvalRotate": 10}},
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERION_RESULTS
    except ImportError:
        return
    if CRITERION_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_RESULTS:
            terminalreporter.write_line(line)
