"""Contract between the framework and benchmark executables.

Protocol document
-----------------
Invocation argv (exact shape)::

    <exe> --benchmark <name> --phase setup|full --config <path> --reps <n>

* ``--phase setup`` executes initialization only (artifact deserialization);
  ``--phase full`` executes initialization plus the region of interest.
* ``--config`` points to a JSON document carrying the crypto parameters,
  benchmark extra parameters, and the artifact cache directory::

      {"benchmark": ..., "crypto": {...}, "extra_params": {...}, "cache_dir": ...}

* The requested thread count is delivered in the ``OMP_NUM_THREADS``
  environment variable; benchmarks must not read thread counts from argv.
* On success the benchmark prints one self-report to standard output,
  framed bit-exactly by the sentinel lines below, one JSON document between
  them. Standard error is free for benchmark logging.

Self-report fields: ``benchmark``, ``phase``, ``repetitions_executed``
(mandatory); ``inner_roi_seconds``, ``dynamic_counts`` (optional). Unknown
extra fields are ignored.
"""

from __future__ import annotations

import json
import math
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from .errors import SelfReportParseError, SelfReportSchemaError
from .registry import AbstractionLevel, BenchmarkSpec, CryptoConfig, config_hash

THREAD_ENV_VAR = "OMP_NUM_THREADS"
REPORT_BEGIN = "===SELFREPORT-BEGIN==="
REPORT_END = "===SELFREPORT-END==="

# A primitive is re-invoked until its cumulative runtime crosses this floor.
MIN_CUMULATIVE_SECONDS = 0.5


class RunPhase(Enum):
    SETUP = "setup"
    FULL = "full"

    @classmethod
    def parse(cls, text: str) -> "RunPhase":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown run phase {text!r}") from None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RunnerInvocation:
    """Fully specified child execution: executable, phase, config, threads."""

    executable: str
    benchmark: str
    phase: RunPhase
    config_path: Path
    thread_count: int
    repetitions: int = 1

    def __post_init__(self):
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def argv(self) -> list[str]:
        return shlex.split(self.executable) + [
            "--benchmark",
            self.benchmark,
            "--phase",
            self.phase.value,
            "--config",
            str(self.config_path),
            "--reps",
            str(self.repetitions),
        ]

    def env(self, base: Mapping[str, str] | None = None) -> dict[str, str]:
        merged = dict(base or {})
        merged[THREAD_ENV_VAR] = str(self.thread_count)
        return merged


@dataclass
class SelfReport:
    """Structured payload a benchmark emits on stdout after each run."""

    benchmark: str
    phase: RunPhase
    repetitions_executed: int
    inner_roi_seconds: float | None = None
    dynamic_counts: dict[str, int] | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def to_document(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "benchmark": self.benchmark,
            "phase": self.phase.value,
            "repetitions_executed": self.repetitions_executed,
        }
        if self.inner_roi_seconds is not None:
            doc["inner_roi_seconds"] = self.inner_roi_seconds
        if self.dynamic_counts is not None:
            doc["dynamic_counts"] = self.dynamic_counts
        doc.update(self.extras)
        return doc


def compute_repetitions(per_call_estimate: float) -> int:
    """Smallest repetition count whose cumulative runtime reaches 500 ms.

    Returns the least r >= 1 with r * per_call_estimate >= 0.5 s.
    """
    if not per_call_estimate > 0:
        raise ValueError(f"per_call_estimate must be > 0, got {per_call_estimate}")
    reps = max(1, math.ceil(MIN_CUMULATIVE_SECONDS / per_call_estimate))
    # Guard against float division landing one step off the true minimum.
    if reps > 1 and (reps - 1) * per_call_estimate >= MIN_CUMULATIVE_SECONDS:
        reps -= 1
    elif reps * per_call_estimate < MIN_CUMULATIVE_SECONDS:
        reps += 1
    return reps


def write_config_document(
    spec: BenchmarkSpec,
    config: CryptoConfig,
    config_dir: Path,
    cache_dir: Path | None = None,
    extra_params: Mapping[str, Any] | None = None,
) -> Path:
    """Serialize the configuration handoff file and return its path.

    The file name is content-addressed by the crypto config so identical
    points across a sweep share one document.
    """
    config_dir = Path(config_dir)
    config_dir.mkdir(parents=True, exist_ok=True)
    params = dict(spec.extra_params)
    params.update(extra_params or {})
    doc = {
        "benchmark": spec.name,
        "crypto": config.to_dict(),
        "extra_params": params,
        "cache_dir": str(cache_dir) if cache_dir is not None else None,
    }
    path = config_dir / f"{_slug(spec.name)}-{config_hash(config)}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_config_document(path: Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())


def build_invocation(
    spec: BenchmarkSpec,
    config: CryptoConfig,
    phase: RunPhase,
    threads: int,
    repetitions: int,
    config_dir: Path,
    cache_dir: Path | None = None,
    extra_params: Mapping[str, Any] | None = None,
    executable: str | None = None,
) -> RunnerInvocation:
    """Create an invocation for one benchmark run, writing its config file."""
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if repetitions > 1 and spec.level != AbstractionLevel.PRIMITIVE:
        raise ValueError(
            f"{spec.name}: repetitions > 1 only applies to primitives "
            f"(level is {spec.level})"
        )
    exe = executable or spec.runner
    if not exe:
        raise ValueError(f"{spec.name}: no runner executable bound")
    config_path = write_config_document(
        spec, config, config_dir, cache_dir=cache_dir, extra_params=extra_params
    )
    return RunnerInvocation(
        executable=exe,
        benchmark=spec.name,
        phase=phase,
        config_path=config_path,
        thread_count=threads,
        repetitions=repetitions,
    )


def format_self_report(report: SelfReport) -> str:
    """Render a report with sentinel framing, ready for stdout."""
    body = json.dumps(report.to_document(), sort_keys=True)
    return f"{REPORT_BEGIN}\n{body}\n{REPORT_END}\n"


_MANDATORY_FIELDS = ("benchmark", "phase", "repetitions_executed")


def parse_self_report(raw: bytes) -> SelfReport:
    """Extract and validate the sentinel-framed self-report from raw stdout."""
    text = raw.decode("utf-8", errors="replace")
    begin = text.find(REPORT_BEGIN)
    if begin < 0:
        raise SelfReportParseError("no self-report begin sentinel found", 0)
    payload_start = begin + len(REPORT_BEGIN)
    end = text.find(REPORT_END, payload_start)
    if end < 0:
        raise SelfReportParseError(
            "no self-report end sentinel found", _byte_offset(text, payload_start)
        )
    payload = text[payload_start:end]
    try:
        doc = json.loads(payload)
    except json.JSONDecodeError as exc:
        offset = _byte_offset(text, payload_start) + _byte_offset(payload, exc.pos)
        raise SelfReportParseError(f"malformed self-report document: {exc.msg}", offset) from exc
    if not isinstance(doc, dict):
        raise SelfReportSchemaError("self-report document must be a JSON object")
    missing = [name for name in _MANDATORY_FIELDS if name not in doc]
    if missing:
        raise SelfReportSchemaError(f"self-report missing mandatory fields: {missing}")

    try:
        phase = RunPhase.parse(str(doc["phase"]))
        reps = int(doc["repetitions_executed"])
    except (ValueError, TypeError) as exc:
        raise SelfReportSchemaError(f"self-report field invalid: {exc}") from exc

    inner = doc.get("inner_roi_seconds")
    if inner is not None:
        inner = float(inner)
        if inner < 0:
            raise SelfReportSchemaError("inner_roi_seconds must be >= 0")
    counts = doc.get("dynamic_counts")
    if counts is not None:
        if not isinstance(counts, dict):
            raise SelfReportSchemaError("dynamic_counts must be an object")
        counts = {str(k): int(v) for k, v in counts.items()}
    extras = {
        k: v
        for k, v in doc.items()
        if k not in (*_MANDATORY_FIELDS, "inner_roi_seconds", "dynamic_counts")
    }
    return SelfReport(
        benchmark=str(doc["benchmark"]),
        phase=phase,
        repetitions_executed=reps,
        inner_roi_seconds=inner,
        dynamic_counts=counts,
        extras=extras,
    )


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


def _slug(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name.lower())
