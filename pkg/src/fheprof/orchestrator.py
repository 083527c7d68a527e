"""Sweep generation, plan execution, artifact caching, and reporting.

A sweep spec expands to the full Cartesian product of its parameter lists;
combinations that fail configuration validation are dropped with a logged
reason. Plans execute strictly sequentially (one child at a time preserves
measurement integrity), are resumable (persisted points are skipped), and
per-point failures never abort the remaining points.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from statistics import median
from typing import Any, Mapping, Protocol

import yaml

from . import flamegraph as fg
from .denoise import denoise, derive, per_call, setup_overhead_pct
from .errors import (
    CapabilityError,
    ConfigError,
    EmptyPlanError,
    EmptyProfileError,
    StoreLockError,
)
from .profiler import EventSet, FailureReport, Profiler, aggregate_median
from .protocol import RunPhase, RunnerInvocation, build_invocation, compute_repetitions
from .registry import (
    AbstractionLevel,
    BenchmarkRegistry,
    BenchmarkSpec,
    CryptoConfig,
    SecurityStandard,
    config_hash,
)
from .store import (
    ResultStore,
    row_from_denoised,
    row_from_measurement,
)

logger = logging.getLogger(__name__)

DEFAULT_RUNS_PER_POINT = 5
DEFAULT_PER_CALL_ESTIMATE = 0.1


@dataclass
class SweepSpec:
    """User-facing sweep description mirrored by the sweep spec file."""

    benchmarks: list[str]
    log2_ring_dims: list[int]
    depths: list[int]
    security_standards: list[SecurityStandard] = field(
        default_factory=lambda: [SecurityStandard.NONE]
    )
    thread_counts: list[int] = field(default_factory=lambda: [1])
    batch_sizes: list[int | None] = field(default_factory=lambda: [None])
    runs_per_point: int = DEFAULT_RUNS_PER_POINT
    events: EventSet | None = None
    record_stacks: bool = False

    def __post_init__(self):
        if self.runs_per_point < 1:
            raise ValueError("runs_per_point must be >= 1")
        for name, values in (
            ("benchmarks", self.benchmarks),
            ("log2_ring_dims", self.log2_ring_dims),
            ("depths", self.depths),
            ("security_standards", self.security_standards),
            ("thread_counts", self.thread_counts),
            ("batch_sizes", self.batch_sizes),
        ):
            if not values:
                raise ValueError(f"sweep spec field {name} must be non-empty")
        if any(t < 1 for t in self.thread_counts):
            raise ValueError("thread counts must be positive")

    @classmethod
    def from_yaml(cls, path: Path) -> "SweepSpec":
        doc = yaml.safe_load(Path(path).read_text()) or {}
        events_field = doc.get("events")
        if events_field in (True, "default"):
            events = EventSet.default()
        elif events_field:
            events = EventSet.from_events([str(e) for e in events_field])
        else:
            events = None
        return cls(
            benchmarks=[str(b) for b in doc["benchmarks"]],
            log2_ring_dims=[int(n) for n in doc["log2_ring_dims"]],
            depths=[int(d) for d in doc["depths"]],
            security_standards=[
                SecurityStandard.parse(s)
                for s in doc.get("security_standards", ["none"])
            ],
            thread_counts=[int(t) for t in doc.get("thread_counts", [1])],
            batch_sizes=[
                None if b in (None, "default") else int(b)
                for b in doc.get("batch_sizes", [None])
            ],
            runs_per_point=int(doc.get("runs_per_point", DEFAULT_RUNS_PER_POINT)),
            events=events,
            record_stacks=bool(doc.get("record_stacks", False)),
        )


@dataclass(frozen=True)
class PlanPoint:
    spec: BenchmarkSpec
    config: CryptoConfig
    threads: int

    def to_doc(self) -> dict[str, Any]:
        return {
            "benchmark": self.spec.name,
            "level": str(self.spec.level),
            "runner": self.spec.runner,
            "config": self.config.to_dict(),
            "threads": self.threads,
        }


@dataclass
class RunPlan:
    points: list[PlanPoint]
    runs_per_point: int
    events: EventSet | None = None
    record_stacks: bool = False
    dropped: list[str] = field(default_factory=list)

    def serialize(self) -> str:
        """Canonical text form; identical specs yield identical bytes."""
        doc = {
            "runs_per_point": self.runs_per_point,
            "events": list(self.events.events) if self.events else None,
            "record_stacks": self.record_stacks,
            "points": [p.to_doc() for p in self.points],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @property
    def event_group_count(self) -> int:
        return len(self.events.groups) if self.events else 0

    def expected_child_executions(self) -> int:
        """runs x (runtime + event groups + stack pass) x two phases, summed."""
        passes = 1 + self.event_group_count + (1 if self.record_stacks else 0)
        return len(self.points) * self.runs_per_point * passes * 2


def generate_sweep(spec: SweepSpec, registry: BenchmarkRegistry) -> RunPlan:
    """Expand the Cartesian product, drop invalid combinations, order points.

    Ordering is primitives, then microbenchmarks, then workloads; within a
    benchmark by (N, L, batch, standard, threads). Deterministic: the same
    (spec, registry) pair always serializes to identical bytes.
    """
    bench_specs = sorted(
        (registry.get(name) for name in spec.benchmarks),
        key=lambda s: (s.level, s.name),
    )
    points: list[PlanPoint] = []
    dropped: list[str] = []
    for bench in bench_specs:
        for n, depth, batch, std, threads in product(
            sorted(spec.log2_ring_dims),
            sorted(spec.depths),
            sorted(spec.batch_sizes, key=lambda b: (b is not None, b)),
            sorted(spec.security_standards, key=lambda s: s.value),
            sorted(spec.thread_counts),
        ):
            overrides = {
                "log2_ring_dim": n,
                "depth": depth,
                "security_standard": std,
                "batch_size": batch if batch is not None else None,
            }
            try:
                config = registry.resolve_config(bench, overrides)
            except (ConfigError, ValueError) as exc:
                reason = f"{bench.name} N=2^{n} L={depth} batch={batch} std={std}: {exc}"
                logger.info("dropped sweep point: %s", reason)
                dropped.append(reason)
                continue
            points.append(PlanPoint(spec=bench, config=config, threads=threads))
    if not points:
        raise EmptyPlanError(
            "sweep produced no valid points; dropped: " + "; ".join(dropped)
        )
    return RunPlan(
        points=points,
        runs_per_point=spec.runs_per_point,
        events=spec.events,
        record_stacks=spec.record_stacks,
        dropped=dropped,
    )


# -- stack recording -----------------------------------------------------------


class StackRecorder(Protocol):
    def record(self, invocation: RunnerInvocation) -> str: ...


class PerfStackRecorder:
    """Records call stacks with the OS sampling profiler (perf record)."""

    def __init__(self, frequency: int = fg.DEFAULT_SAMPLING_HZ, perf_executable: str = "perf"):
        self.frequency = frequency
        self.perf_executable = perf_executable

    def record(self, invocation: RunnerInvocation) -> str:
        if shutil.which(self.perf_executable) is None:
            raise CapabilityError(f"{self.perf_executable!r} not found; cannot record stacks")
        with tempfile.TemporaryDirectory(prefix="fheprof-stacks-") as tmp:
            data = Path(tmp) / "perf.data"
            record_cmd = [
                self.perf_executable,
                "record",
                "-F",
                str(self.frequency),
                "-g",
                "-o",
                str(data),
                "--",
            ] + invocation.argv()
            env = invocation.env(os.environ)
            proc = subprocess.run(record_cmd, env=env, capture_output=True)
            if proc.returncode != 0:
                raise CapabilityError(
                    f"perf record failed ({proc.returncode}): "
                    f"{proc.stderr.decode(errors='replace')[-300:]}"
                )
            script = subprocess.run(
                [self.perf_executable, "script", "-i", str(data)],
                capture_output=True,
            )
            if script.returncode != 0:
                raise CapabilityError("perf script failed")
            return script.stdout.decode(errors="replace")


# -- execution -------------------------------------------------------------


@dataclass
class PointFailure:
    benchmark: str
    config: CryptoConfig
    threads: int
    reason: str


@dataclass
class ExecutionSummary:
    points_total: int = 0
    executed: int = 0
    skipped: int = 0
    child_executions: int = 0
    artifacts_created: int = 0
    artifacts_reused: int = 0
    failures: list[PointFailure] = field(default_factory=list)
    flamegraphs: list[Path] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return not self.failures

    def render(self) -> str:
        lines = [
            f"points: {self.points_total} (executed {self.executed}, "
            f"skipped {self.skipped} cached, failed {len(self.failures)})",
            f"child executions: {self.child_executions}",
            f"artifact caches: {self.artifacts_created} created, "
            f"{self.artifacts_reused} reused",
        ]
        if self.points_total and self.skipped == self.points_total:
            lines.append("all points cached")
        for failure in self.failures:
            lines.append(
                f"FAILED {failure.benchmark} (N=2^{failure.config.log2_ring_dim}, "
                f"L={failure.config.depth}, threads={failure.threads}): {failure.reason}"
            )
        return "\n".join(lines)


def execute_plan(
    plan: RunPlan,
    profiler: Profiler,
    store: ResultStore,
    work_dir: Path,
    stack_recorder: StackRecorder | None = None,
    flamegraph_dir: Path | None = None,
) -> ExecutionSummary:
    """Run every plan point through the profiler and persist denoised rows.

    Resumable: points with a persisted denoised row are skipped. Setup
    passes precede full passes at every point; crypto artifacts are cached
    per config hash and reused across points sharing a configuration.
    """
    work_dir = Path(work_dir)
    config_dir = work_dir / "configs"
    artifact_root = work_dir / "artifacts"
    summary = ExecutionSummary(points_total=len(plan.points))
    if plan.record_stacks and stack_recorder is None:
        stack_recorder = PerfStackRecorder()

    with store.writer():
        for point in plan.points:
            bench = point.spec
            if store.has_point("denoised", bench.name, point.config, point.threads):
                summary.skipped += 1
                continue
            try:
                executions = _execute_point(
                    point,
                    plan,
                    profiler,
                    store,
                    config_dir,
                    artifact_root,
                    summary,
                    stack_recorder,
                    flamegraph_dir or (store.root / "flamegraphs"),
                )
                summary.child_executions += executions
                summary.executed += 1
            except StoreLockError:
                raise
            except FileNotFoundError as exc:
                # A missing runner executable is a per-point condition.
                logger.warning("point %s failed: %s", bench.name, exc)
                summary.failures.append(
                    PointFailure(bench.name, point.config, point.threads, str(exc))
                )
            except OSError:
                # Results-store write failures abort the whole plan; losing
                # the store is not a per-point condition.
                raise
            except Exception as exc:
                logger.warning("point %s failed: %s", bench.name, exc)
                summary.failures.append(
                    PointFailure(bench.name, point.config, point.threads, str(exc))
                )
    return summary


def _execute_point(
    point: PlanPoint,
    plan: RunPlan,
    profiler: Profiler,
    store: ResultStore,
    config_dir: Path,
    artifact_root: Path,
    summary: ExecutionSummary,
    stack_recorder: StackRecorder | None,
    flamegraph_dir: Path,
) -> int:
    bench = point.spec
    cache_dir = artifact_root / config_hash(point.config)
    if cache_dir.exists():
        summary.artifacts_reused += 1
    else:
        cache_dir.mkdir(parents=True)
        summary.artifacts_created += 1

    reps = 1
    if bench.level == AbstractionLevel.PRIMITIVE:
        estimate = float(
            bench.extra_params.get("per_call_estimate_s", DEFAULT_PER_CALL_ESTIMATE)
        )
        reps = compute_repetitions(estimate)

    invocations = {
        phase: build_invocation(
            bench,
            point.config,
            phase,
            point.threads,
            reps,
            config_dir,
            cache_dir=cache_dir,
        )
        for phase in (RunPhase.SETUP, RunPhase.FULL)
    }

    executions = 0
    point_failures: list[FailureReport] = []

    def collect(report: FailureReport) -> None:
        point_failures.append(report)

    # Runtime-analysis pass: setup before full at every point.
    by_phase = {}
    for phase in (RunPhase.SETUP, RunPhase.FULL):
        records = profiler.measure(
            invocations[phase],
            events=None,
            runs=plan.runs_per_point,
            config=point.config,
            on_failure=collect,
        )
        executions += plan.runs_per_point
        if not records:
            raise RuntimeError(
                f"runtime pass produced no admitted {phase.value} records: "
                + "; ".join(f.message for f in point_failures[-3:])
            )
        store.persist(row_from_measurement(r, "runtime") for r in records)
        by_phase[phase] = records

    # Event-profiling pass.
    event_rows = {}
    if plan.events:
        groups = plan.event_group_count
        for phase in (RunPhase.SETUP, RunPhase.FULL):
            records = profiler.measure(
                invocations[phase],
                events=plan.events,
                runs=plan.runs_per_point,
                config=point.config,
                on_failure=collect,
            )
            executions += plan.runs_per_point * groups
            if not records:
                raise RuntimeError(f"event pass produced no {phase.value} records")
            rows = [row_from_measurement(r, "events") for r in records]
            for row in rows:
                row.data["event_groups"] = groups
            store.persist(rows)
            event_rows[phase] = records

    # Call-stack pass (distinct third pass).
    if plan.record_stacks and stack_recorder is not None:
        for phase in (RunPhase.SETUP, RunPhase.FULL):
            texts = [
                stack_recorder.record(invocations[phase])
                for _ in range(plan.runs_per_point)
            ]
            executions += plan.runs_per_point
            samples = [s for text in texts for s in fg.parse_perf_script(text)]
            try:
                profile = fg.ingest(samples)
            except EmptyProfileError:
                logger.warning(
                    "%s %s: stack pass captured no samples", bench.name, phase.value
                )
                continue
            stem = f"{_slug(bench.name)}-{config_hash(point.config)}-t{point.threads}-{phase.value}"
            folded, svg = fg.write_outputs(
                profile, flamegraph_dir, stem, f"{bench.display_name()} ({phase.value})"
            )
            summary.flamegraphs.extend([folded, svg])

    # Denoise medians and persist the point's metrics.
    med_full = aggregate_median(by_phase[RunPhase.FULL])
    med_setup = aggregate_median(by_phase[RunPhase.SETUP])
    metrics = denoise(med_full, med_setup)
    if event_rows:
        ev_metrics = denoise(
            aggregate_median(event_rows[RunPhase.FULL]),
            aggregate_median(event_rows[RunPhase.SETUP]),
        )
        metrics = replace(metrics, roi_events=ev_metrics.roi_events)
    metrics = derive(metrics)
    if bench.level == AbstractionLevel.PRIMITIVE:
        calls = reps
        if med_full.self_report is not None:
            calls = med_full.self_report.repetitions_executed
        metrics = per_call(metrics, calls)
    store.persist([row_from_denoised(metrics)])
    return executions


# -- reporting ---------------------------------------------------------------


def report(store: ResultStore, kind: str, out_dir: Path | None = None) -> str:
    """Human-readable tables / series files from persisted rows.

    Kinds: ``overhead`` (ROI, runtime-analysis and event-profiling
    overheads), ``prediction-speedup`` (profiling vs prediction time), and
    ``series`` (per-primitive metric-vs-threads CSV files for plotting).
    Missing inputs yield an explicit gap report, never fabricated zeros.
    """
    if kind == "overhead":
        return _report_overhead(store)
    if kind == "prediction-speedup":
        return _report_speedup(store)
    if kind == "series":
        return _report_series(store, out_dir or (store.root / "series"))
    raise ValueError(f"unknown report kind {kind!r}")


def _point_key(data: Mapping[str, Any]) -> tuple:
    return (
        data["benchmark"],
        data["log2_ring_dim"],
        data["depth"],
        data["batch_size"],
        data["security_standard"],
        data["thread_count"],
    )


def _report_overhead(store: ResultStore) -> str:
    denoised = store.load("denoised")
    if not denoised:
        return "gap report: no denoised rows in store; run a plan first"
    measurements = store.load("measurement")
    setup_rows: dict[tuple, list[float]] = {}
    event_rows: dict[tuple, list[float]] = {}
    event_groups: dict[tuple, int] = {}
    for row in measurements:
        key = _point_key(row.data)
        if row.data.get("pass") == "runtime" and row.data.get("phase") == "setup":
            setup_rows.setdefault(key, []).append(row.data["wall_time_s"])
        if row.data.get("pass") == "events" and row.data.get("phase") == "full":
            event_rows.setdefault(key, []).append(row.data["wall_time_s"])
            if row.data.get("event_groups"):
                event_groups[key] = int(row.data["event_groups"])

    header = f"{'name':<28} {'ROI (s)':>9} {'runtime analysis':>18} {'event profiling':>18}"
    lines = [header, "-" * len(header)]
    gaps: list[str] = []
    for row in sorted(denoised, key=lambda r: _point_key(r.data)):
        key = _point_key(row.data)
        roi = row.data["roi_time_s"]
        name = f"{row.data['benchmark']} t{row.data['thread_count']}"
        if key not in setup_rows:
            gaps.append(f"{name}: no runtime-pass setup rows")
            continue
        if roi <= 0:
            gaps.append(f"{name}: zero ROI; overhead undefined")
            continue
        setup_time = median(setup_rows[key])
        runtime_cell = f"{setup_time:.2f} ({setup_overhead_pct(roi, setup_time):.2f}%)"
        if key in event_rows:
            # Group executions are statistically identical, so the pass cost
            # is groups x the per-run median; overhead is the excess over ROI.
            groups = event_groups.get(key, 1)
            pass_cost = groups * median(event_rows[key])
            extra = max(pass_cost - roi, 0.0)
            event_cell = f"{extra:.2f} ({100.0 * extra / roi:.1f}%)"
        else:
            event_cell = "-"
        lines.append(f"{name:<28} {roi:>9.2f} {runtime_cell:>18} {event_cell:>18}")
    if gaps:
        lines.append("gaps:")
        lines.extend(f"  {g}" for g in gaps)
    return "\n".join(lines)


def _report_speedup(store: ResultStore) -> str:
    predictions = store.load("prediction")
    if not predictions:
        return "gap report: no prediction rows in store; run predict first"
    measurements = store.load("measurement", phase="full")
    profiling: dict[tuple, list[float]] = {}
    for row in measurements:
        if row.data.get("pass") == "runtime":
            profiling.setdefault(_point_key(row.data), []).append(
                row.data["wall_time_s"]
            )

    header = f"{'name':<28} {'profiling (s)':>14} {'prediction (s)':>15} {'speedup':>9}"
    lines = [header, "-" * len(header)]
    gaps: list[str] = []
    for row in sorted(predictions, key=lambda r: _point_key(r.data)):
        key = _point_key(row.data)
        name = f"{row.data['benchmark']} t{row.data['thread_count']}"
        predict_seconds = row.data.get("predict_seconds")
        if predict_seconds is None or predict_seconds <= 0:
            gaps.append(f"{name}: prediction row lacks model-evaluation time")
            continue
        if key not in profiling:
            gaps.append(f"{name}: no runtime-analysis profiling rows")
            continue
        prof = median(profiling[key])
        lines.append(
            f"{name:<28} {prof:>14.1f} {predict_seconds:>15.1f} "
            f"{prof / predict_seconds:>8.1f}x"
        )
    if gaps:
        lines.append("gaps:")
        lines.extend(f"  {g}" for g in gaps)
    return "\n".join(lines)


def _report_series(store: ResultStore, out_dir: Path) -> str:
    denoised = store.load("denoised")
    if not denoised:
        return "gap report: no denoised rows in store"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series: dict[tuple, list] = {}
    for row in denoised:
        d = row.data
        group = (
            d["benchmark"],
            d["log2_ring_dim"],
            d["depth"],
            d["batch_size"],
            d["security_standard"],
        )
        series.setdefault(group, []).append(d)

    written: list[Path] = []
    for (bench, n, depth, batch, std), rows in sorted(series.items()):
        rows.sort(key=lambda d: d["thread_count"])
        path = out_dir / f"{_slug(bench)}-n{n}-l{depth}.csv"
        with path.open("w") as fh:
            fh.write(
                "thread_count,roi_time_s,roi_energy_j,avg_power_w,"
                "per_call_time_s,per_call_energy_j\n"
            )
            for d in rows:
                fh.write(
                    ",".join(
                        "" if d.get(c) is None else repr(d[c])
                        if isinstance(d.get(c), float)
                        else str(d[c])
                        for c in (
                            "thread_count",
                            "roi_time_s",
                            "roi_energy_j",
                            "avg_power_w",
                            "per_call_time_s",
                            "per_call_energy_j",
                        )
                    )
                    + "\n"
                )
        written.append(path)
    return "wrote series files:\n" + "\n".join(f"  {p}" for p in written)


def time_predict(fn, *args, **kwargs):
    """Run a model evaluation and return (result, wall seconds)."""
    start = time.perf_counter()
    result = fn(*args, **kwargs)
    return result, time.perf_counter() - start


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name.lower())
