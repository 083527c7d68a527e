"""Child-process measurement: wall time, package energy, PMU event counts.

One benchmark process runs at a time; event sets larger than the hardware
counter budget are split into sequentially measured groups (extra child
executions) instead of accepting multiplexed, scaled counts. Energy comes
from the package-domain RAPL counter via the powercap sysfs interface and
degrades to "absent" (never silently zero) when unreadable.
"""

from __future__ import annotations

import logging
import os
import shutil
import subprocess
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from statistics import median
from typing import Callable, Protocol, Sequence

from .errors import CapabilityError, ProtocolError
from .protocol import RunnerInvocation, RunPhase, SelfReport, parse_self_report
from .registry import CryptoConfig

logger = logging.getLogger(__name__)

# PMU events collected by default, grouped by co-schedulable category.
DEFAULT_EVENT_GROUPS: tuple[tuple[str, ...], ...] = (
    ("instructions", "cpu-cycles", "branches", "branch-misses"),
    ("cache-references", "cache-misses", "L1-dcache-loads", "L1-icache-load-misses"),
    ("dTLB-loads", "dTLB-load-misses", "iTLB-load-misses"),
    ("page-faults", "minor-faults"),
)
DEFAULT_COUNTER_BUDGET = 4


@dataclass(frozen=True)
class EventSet:
    """Ordered PMU event list partitioned into co-schedulable groups."""

    events: tuple[str, ...]
    groups: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        flattened = tuple(e for group in self.groups for e in group)
        if sorted(flattened) != sorted(self.events):
            raise ValueError("groups must partition the event list exactly")

    @classmethod
    def default(cls) -> "EventSet":
        events = tuple(e for group in DEFAULT_EVENT_GROUPS for e in group)
        return cls(events=events, groups=DEFAULT_EVENT_GROUPS)

    @classmethod
    def from_events(
        cls, events: Sequence[str], counter_budget: int = DEFAULT_COUNTER_BUDGET
    ) -> "EventSet":
        if counter_budget < 1:
            raise ValueError("counter_budget must be >= 1")
        events = tuple(events)
        groups = tuple(
            events[i : i + counter_budget] for i in range(0, len(events), counter_budget)
        )
        return cls(events=events, groups=groups)


@dataclass
class MeasurementRecord:
    """One profiled child execution (or the merged view across event groups)."""

    benchmark: str
    phase: RunPhase
    config: CryptoConfig
    thread_count: int
    wall_time: float
    energy: float | None
    # Raw runs hold integer counts; aggregated records may hold midpoints.
    event_counts: dict[str, float] = field(default_factory=dict)
    run_index: int = 0
    timestamp: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    exit_status: int = 0
    self_report: SelfReport | None = None

    def key(self) -> tuple:
        return (self.benchmark, self.phase, self.config, self.thread_count)


@dataclass
class FailureReport:
    """Why a run was excluded from aggregation."""

    invocation: RunnerInvocation
    run_index: int
    exit_status: int | None
    message: str
    stderr_tail: str = ""


# -- energy ----------------------------------------------------------------

POWERCAP_ROOT = Path("/sys/class/powercap")


class RaplEnergyReader:
    """Package-domain cumulative energy via the powercap sysfs files."""

    def __init__(self, domain_dir: Path | None = None):
        self.domain_dir = domain_dir or self._find_package_domain()
        try:
            self.max_range_joules = (
                int((self.domain_dir / "max_energy_range_uj").read_text()) / 1e6
            )
            self.read_joules()
        except (OSError, ValueError) as exc:
            raise CapabilityError(f"package energy counter unreadable: {exc}") from exc

    @staticmethod
    def _find_package_domain() -> Path:
        if not POWERCAP_ROOT.is_dir():
            raise CapabilityError("powercap interface not present on this host")
        for entry in sorted(POWERCAP_ROOT.glob("intel-rapl:*")):
            name_file = entry / "name"
            try:
                if name_file.read_text().strip().startswith("package"):
                    return entry
            except OSError:
                continue
        raise CapabilityError("no package-domain RAPL zone found")

    def read_joules(self) -> float:
        """Cumulative joules since boot (wraps at max_range_joules)."""
        return int((self.domain_dir / "energy_uj").read_text()) / 1e6

    def delta_joules(self, before: float, after: float) -> float:
        if after < before:
            # The counter wrapped (at most once across a child lifetime).
            return after + self.max_range_joules - before
        return after - before


def read_energy_counter() -> float:
    """Read the default package energy counter; raises CapabilityError."""
    return RaplEnergyReader().read_joules()


class EnergyReader(Protocol):
    def read_joules(self) -> float: ...

    def delta_joules(self, before: float, after: float) -> float: ...


def detect_energy_reader() -> RaplEnergyReader | None:
    try:
        return RaplEnergyReader()
    except CapabilityError as exc:
        logger.info("energy disabled: %s", exc)
        return None


# -- child execution --------------------------------------------------------


@dataclass
class Execution:
    """Raw result of one child process run."""

    exit_status: int
    wall_time: float
    stdout: bytes
    stderr: bytes
    event_counts: dict[str, int] | None = None
    energy: float | None = None


class ChildRunner(Protocol):
    def run(
        self, invocation: RunnerInvocation, events: Sequence[str] | None
    ) -> Execution: ...


class SubprocessRunner:
    """Runs invocations as real child processes, via perf stat for events."""

    def __init__(
        self,
        energy_reader: EnergyReader | None = None,
        perf_executable: str = "perf",
        detect_energy: bool = True,
    ):
        self.energy_reader = energy_reader
        if energy_reader is None and detect_energy:
            self.energy_reader = detect_energy_reader()
        self.perf_executable = perf_executable

    def perf_available(self) -> bool:
        return shutil.which(self.perf_executable) is not None

    def run(
        self, invocation: RunnerInvocation, events: Sequence[str] | None
    ) -> Execution:
        argv = invocation.argv()
        if events:
            if not self.perf_available():
                raise CapabilityError(
                    f"{self.perf_executable!r} not found; cannot count PMU events"
                )
            argv = [
                self.perf_executable,
                "stat",
                "-x",
                ",",
                "-e",
                ",".join(events),
                "--",
            ] + argv
        env = invocation.env(os.environ)
        before = self.energy_reader.read_joules() if self.energy_reader else None
        start = time.perf_counter()
        proc = subprocess.run(argv, env=env, capture_output=True)
        wall = time.perf_counter() - start
        energy = None
        if self.energy_reader is not None and before is not None:
            energy = self.energy_reader.delta_joules(
                before, self.energy_reader.read_joules()
            )
        counts = (
            parse_perf_stat_output(proc.stderr.decode(errors="replace"), events)
            if events
            else None
        )
        return Execution(
            exit_status=proc.returncode,
            wall_time=wall,
            stdout=proc.stdout,
            stderr=proc.stderr,
            event_counts=counts,
            energy=energy,
        )


def parse_perf_stat_output(
    stderr_text: str, events: Sequence[str]
) -> dict[str, int]:
    """Parse ``perf stat -x ,`` CSV lines into {event: count}."""
    counts: dict[str, int] = {}
    wanted = set(events)
    for line in stderr_text.splitlines():
        parts = line.split(",")
        if len(parts) < 3:
            continue
        value, _unit, name = parts[0], parts[1], parts[2]
        name = name.strip()
        # perf suffixes modifiers (e.g. ":u"); match on the bare event name.
        bare = name.split(":")[0]
        if bare not in wanted:
            continue
        if value in ("<not supported>", "<not counted>"):
            logger.warning("event %s not counted on this host", bare)
            continue
        try:
            counts[bare] = int(float(value))
        except ValueError:
            continue
    return counts


# -- measurement -------------------------------------------------------------


class Profiler:
    """Measures invocations with multi-run, grouped-event accounting."""

    def __init__(
        self,
        runner: ChildRunner | None = None,
        retry_budget: int = 1,
    ):
        self.runner = runner if runner is not None else SubprocessRunner()
        self.retry_budget = retry_budget

    def measure(
        self,
        invocation: RunnerInvocation,
        events: EventSet | None = None,
        runs: int = 1,
        config: CryptoConfig | None = None,
        on_failure: Callable[[FailureReport], None] | None = None,
    ) -> list[MeasurementRecord]:
        """Execute ``runs`` measurements, one merged record per run index.

        With an EventSet of g groups the child executes runs x g times; the
        g executions at each run index are merged (their event counts never
        mix across run indices). Failed runs are retried up to the budget,
        then excluded with a failure report.
        """
        if runs < 1:
            raise ValueError("runs must be >= 1")
        if config is None:
            config = _config_from_invocation(invocation)
        report_failure = on_failure or _log_failure
        groups: tuple[Sequence[str] | None, ...] = (
            tuple(events.groups) if events else (None,)
        )
        records: list[MeasurementRecord] = []
        for run_index in range(runs):
            record = self._measure_one(
                invocation, groups, run_index, config, report_failure
            )
            if record is not None:
                records.append(record)
        return records

    def _measure_one(
        self,
        invocation: RunnerInvocation,
        groups: tuple[Sequence[str] | None, ...],
        run_index: int,
        config: CryptoConfig,
        report_failure: Callable[[FailureReport], None],
    ) -> MeasurementRecord | None:
        merged_counts: dict[str, int] = {}
        record: MeasurementRecord | None = None
        for group_index, group in enumerate(groups):
            execution = self._run_with_retry(
                invocation, group, run_index, report_failure
            )
            if execution is None:
                return None
            if group:
                merged_counts.update(execution.event_counts or {})
            if group_index == 0:
                try:
                    self_report = parse_self_report(execution.stdout)
                except ProtocolError as exc:
                    report_failure(
                        FailureReport(
                            invocation,
                            run_index,
                            execution.exit_status,
                            f"self-report invalid: {exc}",
                            stderr_tail=_tail(execution.stderr),
                        )
                    )
                    return None
                record = MeasurementRecord(
                    benchmark=invocation.benchmark,
                    phase=invocation.phase,
                    config=config,
                    thread_count=invocation.thread_count,
                    wall_time=execution.wall_time,
                    energy=execution.energy,
                    run_index=run_index,
                    exit_status=execution.exit_status,
                    self_report=self_report,
                )
        assert record is not None
        record.event_counts = merged_counts
        return record

    def _run_with_retry(
        self,
        invocation: RunnerInvocation,
        group: Sequence[str] | None,
        run_index: int,
        report_failure: Callable[[FailureReport], None],
    ) -> Execution | None:
        last: Execution | None = None
        for attempt in range(self.retry_budget + 1):
            execution = self.runner.run(invocation, group)
            if execution.exit_status == 0:
                if attempt:
                    logger.info(
                        "%s run %d succeeded on retry %d",
                        invocation.benchmark,
                        run_index,
                        attempt,
                    )
                return execution
            last = execution
        report_failure(
            FailureReport(
                invocation,
                run_index,
                last.exit_status if last else None,
                f"child exited nonzero after {self.retry_budget + 1} attempts",
                stderr_tail=_tail(last.stderr) if last else "",
            )
        )
        return None


def aggregate_median(records: Sequence[MeasurementRecord]) -> MeasurementRecord:
    """Field-wise median across homogeneous runs; run_index set to -1.

    Even-count medians use the arithmetic midpoint of the two central
    values. Energy medians span the runs where energy was present.
    """
    if not records:
        raise ValueError("aggregate_median requires at least one record")
    keys = {r.key() for r in records}
    if len(keys) > 1:
        raise ValueError(f"heterogeneous records: {sorted(map(str, keys))}")
    wall = median(r.wall_time for r in records)
    energies = [r.energy for r in records if r.energy is not None]
    if energies and len(energies) < len(records):
        logger.warning(
            "energy present on only %d/%d runs; median over present values",
            len(energies),
            len(records),
        )
    energy = median(energies) if energies else None
    event_names = sorted({name for r in records for name in r.event_counts})
    counts: dict[str, float] = {}
    for name in event_names:
        values = [r.event_counts[name] for r in records if name in r.event_counts]
        counts[name] = median(values)
    return replace(
        records[0],
        wall_time=wall,
        energy=energy,
        event_counts=counts,
        run_index=-1,
        timestamp=max(r.timestamp for r in records),
        exit_status=0,
    )


def _config_from_invocation(invocation: RunnerInvocation) -> CryptoConfig:
    from .protocol import read_config_document

    doc = read_config_document(invocation.config_path)
    return CryptoConfig.from_dict(doc["crypto"])


def _log_failure(report: FailureReport) -> None:
    logger.warning(
        "run %d of %s (%s) failed: %s%s",
        report.run_index,
        report.invocation.benchmark,
        report.invocation.phase,
        report.message,
        f"; stderr: {report.stderr_tail}" if report.stderr_tail else "",
    )


def _tail(data: bytes, limit: int = 400) -> str:
    text = data.decode(errors="replace").strip()
    return text[-limit:]


__all__ = [
    "DEFAULT_EVENT_GROUPS",
    "EventSet",
    "MeasurementRecord",
    "FailureReport",
    "RaplEnergyReader",
    "read_energy_counter",
    "detect_energy_reader",
    "Execution",
    "SubprocessRunner",
    "Profiler",
    "aggregate_median",
    "parse_perf_stat_output",
]
