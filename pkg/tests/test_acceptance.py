"""Acceptance suite: one test per release criterion, fixed tolerances.

Each criterion records a PASS/FAIL line that the terminal summary prints
(see conftest). Criterion 9 exercises a real adapter executable and skips
when none is discoverable.
"""

from __future__ import annotations

import contextlib
import csv
import math
import os
import random
import shutil
import subprocess

import pytest

from conftest import FIXTURES
from fheprof.denoise import denoise, derive, per_call, setup_overhead_pct
from fheprof.flamegraph import fold_lines, ingest, parse_perf_script, render_svg
from fheprof.model import (
    PrimitiveCostTable,
    aggregate_geomean,
    breakdown,
    cosine_similarity,
    predict,
    validate,
)
from fheprof.orchestrator import SweepSpec, execute_plan, generate_sweep, report
from fheprof.profiler import Profiler, SubprocessRunner, aggregate_median
from fheprof.protocol import (
    RunPhase,
    build_invocation,
    compute_repetitions,
    parse_self_report,
)
from fheprof.registry import BenchmarkRegistry, CryptoConfig, OpCountManifest
from fheprof.store import ResultStore, row_from_measurement, row_from_prediction
from fheprof.synthetic import SyntheticCostModel, synthetic_registry
from test_flamegraph import audit_svg_geometry

CRITERION_RESULTS: list[str] = []


@contextlib.contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        CRITERION_RESULTS.append(f"criterion {number} ({name}): FAIL")
        raise
    CRITERION_RESULTS.append(f"criterion {number} ({name}): PASS")


# -- 1. manifest fidelity ----------------------------------------------------


def test_criterion_1_manifest_fidelity(registry):
    with criterion(1, "manifest fidelity"):
        with open(FIXTURES / "table3_manifests.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        benchmarks = [c for c in rows[0] if c != "primitive"]
        assert len(rows) == 14 and len(benchmarks) == 7
        checked = 0
        for bench in benchmarks:
            manifest = registry.get_manifest(bench)
            for row in rows:
                expected = int(row[bench])
                assert manifest.counts[row["primitive"]] == expected, (
                    f"{bench}/{row['primitive']}: "
                    f"{manifest.counts[row['primitive']]} != {expected}"
                )
                checked += 1
        assert checked == 14 * 7


# -- 2. additive-model oracle -------------------------------------------------


def test_criterion_2_additive_model_oracle():
    with criterion(2, "additive-model oracle"):
        rng = random.Random(20250810)
        config = CryptoConfig(16, 10, 4096)
        key = (config, 1)
        primitives = [f"Op{i}" for i in range(12)]
        for trial in range(1000):
            active = rng.sample(primitives, rng.randint(1, len(primitives)))
            counts = {p: rng.randint(0, 10_000) for p in active}
            costs = {
                p: (rng.uniform(1e-6, 5.0), rng.uniform(1e-4, 100.0)) for p in active
            }
            table = PrimitiveCostTable()
            for p, (t, e) in costs.items():
                table.add(config, 1, p, t, e)
            manifest = OpCountManifest(f"rand-{trial}", counts)
            prediction = predict(manifest, table, key)

            expect_t = 0.0
            expect_e = 0.0
            for p, c in counts.items():
                if c > 0:
                    expect_t += c * costs[p][0]
                    expect_e += c * costs[p][1]
            assert prediction.total_time == pytest.approx(expect_t, rel=1e-12, abs=1e-15)
            assert prediction.total_energy == pytest.approx(expect_e, rel=1e-12, abs=1e-15)

            # Homogeneity: k-scaled manifest scales totals, keeps shares.
            k = rng.randint(0, 4)
            scaled = predict(manifest.scaled(k), table, key)
            assert scaled.total_time == pytest.approx(k * prediction.total_time, rel=1e-12, abs=1e-15)

            # Additivity on totals under count-wise union.
            other_counts = {p: rng.randint(0, 1000) for p in active}
            union = {p: counts[p] + other_counts[p] for p in active}
            p_other = predict(OpCountManifest("o", other_counts), table, key)
            p_union = predict(OpCountManifest("u", union), table, key)
            assert p_union.total_time == pytest.approx(
                prediction.total_time + p_other.total_time, rel=1e-12, abs=1e-15
            )

            # Argmax stability under uniform cost scaling.
            if prediction.total_time > 0:
                factor = rng.uniform(0.1, 100.0)
                scaled_table = PrimitiveCostTable()
                for p, (t, e) in costs.items():
                    scaled_table.add(config, 1, p, t * factor, e * factor)
                ranked = breakdown(prediction)
                ranked_scaled = breakdown(predict(manifest, scaled_table, key))
                assert ranked[0][0] == ranked_scaled[0][0]


# -- 3. end-to-end synthetic closure -------------------------------------------


BASE_COSTS = {
    "EvalAdd": 0.002,
    "EvalSub": 0.002,
    "EvalRotate": 0.005,
    "EvalMult": 0.006,
}
COMBO_A = {"EvalAdd": 200, "EvalMult": 60, "EvalRotate": 40, "EvalSub": 100}
NOISY_COMBOS = {
    "combo-x": {"EvalAdd": 150, "EvalMult": 50},
    "combo-y": {"EvalMult": 80, "EvalRotate": 60},
    "combo-z": {"EvalAdd": 100, "EvalSub": 200, "EvalRotate": 30},
}
RUNS = 5  # median-of-five measurement policy


def _profile_point(profiler, registry, name, tmp_path, runs=RUNS, reps=1, threads=1):
    spec = registry.get(name)
    config = registry.resolve_config(spec, {})
    records = {}
    for phase in (RunPhase.SETUP, RunPhase.FULL):
        invocation = build_invocation(
            spec, config, phase, threads, reps, tmp_path / "configs"
        )
        measured = profiler.measure(invocation, runs=runs, config=config)
        assert measured, f"no admitted records for {name} {phase}"
        records[phase] = measured
    metrics = derive(
        denoise(
            aggregate_median(records[RunPhase.FULL]),
            aggregate_median(records[RunPhase.SETUP]),
        )
    )
    return metrics, config


@pytest.mark.slow
def test_criterion_3_synthetic_closure(tmp_path, fake_energy_profiler):
    with criterion(3, "end-to-end synthetic closure"):
        model = SyntheticCostModel(base_costs=BASE_COSTS, setup_cost=0.03)
        registry = synthetic_registry(model, composites={"combo-a": COMBO_A})
        config = CryptoConfig(16, 10, 4096)
        key = (config, 1)

        # Profile every primitive under the 500 ms repetition rule.
        table = PrimitiveCostTable()
        for name in BASE_COSTS:
            reps = compute_repetitions(model.per_call_seconds(name, config, 1))
            metrics, _ = _profile_point(
                fake_energy_profiler, registry, name, tmp_path, reps=reps
            )
            metrics = per_call(metrics, reps)
            assert metrics.per_call_time is not None and metrics.per_call_time > 0
            table.add(
                config, 1, name, metrics.per_call_time, metrics.per_call_energy
            )

        # Predict the composite, then measure it.
        prediction = predict(registry.get_manifest("combo-a"), table, key)
        measured, _ = _profile_point(fake_energy_profiler, registry, "combo-a", tmp_path)
        eps_time, eps_energy = validate(prediction, measured)
        assert abs(eps_time) <= 0.05, f"noise-free closure error {eps_time:+.2%}"
        assert eps_energy is not None  # energy path exercised end to end

        # Injected 2% noise: error geomean magnitude stays within 5%.
        noisy_model = SyntheticCostModel(
            base_costs=BASE_COSTS, setup_cost=0.03, noise_amplitude=0.02
        )
        noisy_registry = synthetic_registry(noisy_model, composites=NOISY_COMBOS)
        errors = []
        for name in NOISY_COMBOS:
            noisy_measured, _ = _profile_point(
                fake_energy_profiler, noisy_registry, name, tmp_path
            )
            noisy_prediction = predict(noisy_registry.get_manifest(name), table, key)
            eps, _ = validate(noisy_prediction, noisy_measured)
            errors.append(eps)
        geomean = aggregate_geomean(errors)
        assert abs(geomean) <= 0.05, f"noisy geomean {geomean:+.2%} ({errors})"


# -- 4. denoiser arithmetic ----------------------------------------------------


def test_criterion_4_denoiser_arithmetic(caplog):
    import logging

    from conftest import make_record

    with criterion(4, "denoiser arithmetic"):
        full = make_record(10.20, phase=RunPhase.FULL, benchmark="matrix-mult-32")
        setup = make_record(0.04, phase=RunPhase.SETUP, benchmark="matrix-mult-32")
        metrics = denoise(full, setup)
        assert metrics.roi_time == pytest.approx(10.16, abs=1e-12)
        overhead = setup_overhead_pct(metrics.roi_time, setup.wall_time)
        assert f"{overhead:.2f}%" == "0.39%"

        # Negative-ROI clamp path.
        with caplog.at_level(logging.WARNING):
            clamped = denoise(
                make_record(0.010, phase=RunPhase.FULL),
                make_record(0.011, phase=RunPhase.SETUP),
            )
        assert clamped.roi_time == 0.0
        assert any("negative ROI" in r.message for r in caplog.records)


# -- 5. aggregators --------------------------------------------------------------


def test_criterion_5_aggregators():
    with criterion(5, "aggregators vs brute force"):
        rng = random.Random(55)
        for _ in range(100):
            errors = [rng.uniform(-0.7, 2.0) for _ in range(rng.randint(1, 15))]
            product = 1.0
            for e in errors:
                product *= 1.0 + e
            expected = product ** (1.0 / len(errors)) - 1.0
            assert aggregate_geomean(errors) == pytest.approx(expected, rel=1e-12, abs=1e-13)

        for _ in range(100):
            n = rng.randint(1, 14)
            a = [rng.uniform(0.0, 1.0) for _ in range(n)]
            b = [rng.uniform(0.0, 1.0) for _ in range(n)]
            if not any(a) or not any(b):
                continue
            dot = sum(x * y for x, y in zip(a, b))
            norms = math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
            assert cosine_similarity(a, b) == pytest.approx(dot / norms, rel=1e-12, abs=1e-12)

        assert aggregate_geomean([0.21, 0.0]) == pytest.approx(0.10, rel=1e-12)
        assert cosine_similarity([0.2, 0.8], [0.2, 0.8]) == pytest.approx(1.0, rel=1e-12)


# -- 6. flamegraph ----------------------------------------------------------------


def test_criterion_6_flamegraph_golden():
    with criterion(6, "flamegraph golden + geometry"):
        text = (FIXTURES / "perf_script_sample.txt").read_text()
        samples = list(parse_perf_script(text))
        profile = ingest(samples)
        golden = (FIXTURES / "folded_golden.txt").read_bytes()
        assert fold_lines(profile).encode() == golden  # byte-identical
        assert profile.total_weight == len(samples)  # weight conservation
        svg = render_svg(profile, "fixture corpus")
        audit_svg_geometry(svg)
        assert render_svg(profile, "fixture corpus") == svg  # determinism


# -- 7. report fidelity -------------------------------------------------------------


def test_criterion_7_report_fidelity(tmp_path):
    import re

    from conftest import make_record
    from fheprof.model import Prediction
    from fheprof.registry import SecurityStandard

    with criterion(7, "report fidelity (prediction speedup)"):
        store = ResultStore(tmp_path / "store")
        config = CryptoConfig(17, 14, 65536, SecurityStandard.BITS_128)
        rows = [
            row_from_measurement(
                make_record(253.2, benchmark="logreg", threads=8, config=config),
                "runtime",
            ),
            row_from_prediction(
                Prediction("logreg", (config, 8), total_time=250.0, total_energy=None),
                predict_seconds=0.6,
            ),
        ]
        store.persist(rows)
        text = report(store, "prediction-speedup")
        match = re.search(r"logreg t8\s+[\d.]+\s+[\d.]+\s+([\d.]+)x", text)
        assert match, text
        assert abs(float(match.group(1)) - 422.0) <= 0.1


# -- 8. orchestrator determinism & resume ----------------------------------------


@pytest.mark.slow
def test_criterion_8_orchestrator_determinism_resume(tmp_path):
    with criterion(8, "orchestrator determinism + resume"):
        model = SyntheticCostModel(
            base_costs={"EvalAdd": 0.002, "EvalMult": 0.006}, setup_cost=0.02
        )
        registry = synthetic_registry(
            model, composites={"combo": {"EvalAdd": 60, "EvalMult": 25}}
        )
        spec = SweepSpec(
            benchmarks=["EvalAdd", "combo"],
            log2_ring_dims=[15, 16],
            depths=[10],
            runs_per_point=5,
        )

        plan_a = generate_sweep(spec, registry)
        plan_b = generate_sweep(spec, registry)
        assert plan_a.serialize().encode() == plan_b.serialize().encode()
        assert len(plan_a.points) == 4

        store = ResultStore(tmp_path / "results")
        summary = execute_plan(plan_a, Profiler(), store, work_dir=tmp_path / "work")
        assert summary.all_ok, summary.render()
        # 4 points x 5 runs x 1 pass x 2 phases
        assert summary.child_executions == 40
        assert summary.child_executions == plan_a.expected_child_executions()

        snapshot = {
            p.name: p.read_bytes() for p in sorted((tmp_path / "results").iterdir())
            if p.is_file()
        }
        second = execute_plan(plan_a, Profiler(), store, work_dir=tmp_path / "work")
        assert second.child_executions == 0
        assert second.skipped == 4
        after = {
            p.name: p.read_bytes() for p in sorted((tmp_path / "results").iterdir())
            if p.is_file()
        }
        assert after == snapshot


# -- 9. adapter smoke (secondary component) ---------------------------------------


TABLE3_MM32 = {"EvalAdd": 178, "EvalMult": 16, "EvalMult(Plaintext)": 32, "EvalRotate": 193}

PRIMITIVE_NAMES = [
    "EvalAdd",
    "EvalAdd(Plaintext)",
    "EvalSub",
    "EvalSub(Scalar)",
    "EvalMult",
    "EvalMultNoRelin",
    "EvalMult(Plaintext)",
    "EvalMult(Scalar)",
    "EvalSquare",
    "EvalRotate",
    "EvalFastRotate",
    "EvalBootstrap",
    "EvalChebyshevFunction",
    "EvalChebyshevSeries",
]


def _find_adapter() -> str | None:
    candidate = os.environ.get("FHEPROF_ADAPTER")
    if candidate:
        return candidate
    return shutil.which("fhe-adapter")


@pytest.mark.slow
def test_criterion_9_adapter_smoke(tmp_path):
    adapter = _find_adapter()
    if adapter is None:
        pytest.skip(
            "no FHE adapter executable found (set FHEPROF_ADAPTER or put "
            "fhe-adapter on PATH); criterion 9 runs in the adapter package"
        )
    with criterion(9, "adapter smoke"):
        registry = BenchmarkRegistry.builtin()
        profiler = Profiler(runner=SubprocessRunner(detect_energy=False))
        overrides = {"log2_ring_dim": 13, "depth": 5, "batch_size": 1024}
        # Enough repetitions that every primitive's ROI clears process
        # startup noise; medians of three runs per phase.
        reps, runs = 64, 3
        for name in PRIMITIVE_NAMES:
            spec = registry.get(name)
            config = registry.resolve_config(spec, overrides)
            records = {}
            for phase in (RunPhase.SETUP, RunPhase.FULL):
                invocation = build_invocation(
                    spec,
                    config,
                    phase,
                    1,
                    reps,
                    tmp_path / "configs",
                    cache_dir=tmp_path / "cache",
                    executable=adapter,
                )
                measured = profiler.measure(invocation, runs=runs, config=config)
                assert measured, f"{name} {phase.value} produced no records"
                assert measured[0].self_report is not None
                records[phase] = measured
            metrics = denoise(
                aggregate_median(records[RunPhase.FULL]),
                aggregate_median(records[RunPhase.SETUP]),
            )
            assert metrics.roi_time > 0, f"{name}: ROI not positive"

        # Matrix multiplication instrumented counts vs the registry manifest.
        spec = registry.get("matrix-mult-32")
        config = registry.resolve_config(spec, overrides)
        invocation = build_invocation(
            spec,
            config,
            RunPhase.FULL,
            1,
            1,
            tmp_path / "configs",
            cache_dir=tmp_path / "cache",
            executable=adapter,
        )
        proc = subprocess.run(
            invocation.argv(), capture_output=True, env=invocation.env(os.environ)
        )
        assert proc.returncode == 0, proc.stderr[-500:]
        counts = parse_self_report(proc.stdout).dynamic_counts
        assert counts is not None
        nonzero = {k: v for k, v in counts.items() if v}
        assert nonzero == TABLE3_MM32, f"dynamic counts {nonzero} != Table 3 column"

        # Thread-scaling trend needs >= 8 physical cores to be meaningful.
        if (os.cpu_count() or 1) >= 8:
            walls = {}
            spec = registry.get("EvalMult")
            config = registry.resolve_config(spec, overrides)
            for threads in (1, 8):
                invocation = build_invocation(
                    spec,
                    config,
                    RunPhase.FULL,
                    threads,
                    reps,
                    tmp_path / "configs",
                    cache_dir=tmp_path / "cache",
                    executable=adapter,
                )
                measured = profiler.measure(invocation, runs=runs, config=config)
                walls[threads] = aggregate_median(measured).wall_time
            assert walls[8] < walls[1], f"no thread-scaling benefit: {walls}"
