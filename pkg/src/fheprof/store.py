"""Append-only results store: one delimited-text file per row kind.

A store is a directory of CSV files plus a manifest carrying the schema
version, so results stay diff-able and mergeable across machines with no
database dependency. Writes require the single-writer lock; readers are
lock-free. Unknown columns survive load/persist round trips.
"""

from __future__ import annotations

import csv
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Iterator

from .denoise import DenoisedMetrics
from .errors import SchemaVersionError, StoreLockError
from .model import Contribution, CostKey, Prediction
from .profiler import MeasurementRecord
from .protocol import RunPhase
from .registry import CryptoConfig, SecurityStandard

SCHEMA_VERSION = 1

_CONFIG_COLUMNS = ("log2_ring_dim", "depth", "batch_size", "security_standard")

# Column order per row kind; every file also ends with an "extras" column.
COLUMNS: dict[str, tuple[str, ...]] = {
    "measurement": (
        "benchmark",
        "phase",
        "pass",
        *_CONFIG_COLUMNS,
        "thread_count",
        "run_index",
        "wall_time_s",
        "energy_j",
        "event_counts",
        "repetitions",
        "exit_status",
        "timestamp",
    ),
    "denoised": (
        "benchmark",
        *_CONFIG_COLUMNS,
        "thread_count",
        "roi_time_s",
        "roi_energy_j",
        "avg_power_w",
        "ipc",
        "roi_events",
        "per_call_time_s",
        "per_call_energy_j",
        "calls",
        "denoised",
    ),
    "prediction": (
        "benchmark",
        *_CONFIG_COLUMNS,
        "thread_count",
        "total_time_s",
        "total_energy_j",
        "contributions",
        "predict_seconds",
    ),
    "validation": (
        "benchmark",
        *_CONFIG_COLUMNS,
        "thread_count",
        "eps_time",
        "eps_energy",
        "cosine",
    ),
}

_JSON_COLUMNS = {"event_counts", "roi_events", "contributions", "extras"}
_INT_COLUMNS = {
    "log2_ring_dim",
    "depth",
    "batch_size",
    "thread_count",
    "run_index",
    "repetitions",
    "exit_status",
    "calls",
}
_FLOAT_COLUMNS = {
    "wall_time_s",
    "energy_j",
    "roi_time_s",
    "roi_energy_j",
    "avg_power_w",
    "ipc",
    "per_call_time_s",
    "per_call_energy_j",
    "total_time_s",
    "total_energy_j",
    "predict_seconds",
    "eps_time",
    "eps_energy",
    "cosine",
}
_BOOL_COLUMNS = {"denoised"}


@dataclass
class ResultRow:
    """Flat record with a row-kind discriminator; extra fields pass through."""

    kind: str
    data: dict[str, Any] = field(default_factory=dict)

    def config(self) -> CryptoConfig:
        return CryptoConfig(
            log2_ring_dim=self.data["log2_ring_dim"],
            depth=self.data["depth"],
            batch_size=self.data["batch_size"],
            security_standard=SecurityStandard.parse(self.data["security_standard"]),
        )

    def matches(self, **filters: Any) -> bool:
        for column, wanted in filters.items():
            if wanted is None:
                continue
            if self.data.get(column) != wanted:
                return False
        return True


class ResultStore:
    """Directory-backed store with a manifest and per-kind CSV files."""

    def __init__(self, root: Path, create: bool = True):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text())
            found = int(manifest.get("schema_version", 0))
            if found > SCHEMA_VERSION:
                raise SchemaVersionError(found, SCHEMA_VERSION)
            self.schema_version = found
        elif create:
            self.root.mkdir(parents=True, exist_ok=True)
            manifest_path.write_text(
                json.dumps({"schema_version": SCHEMA_VERSION}, indent=2) + "\n"
            )
            self.schema_version = SCHEMA_VERSION
        else:
            raise FileNotFoundError(f"no store at {self.root}")
        self._lock_held = False

    # -- locking -----------------------------------------------------------

    @property
    def _lock_path(self) -> Path:
        return self.root / ".lock"

    @contextmanager
    def writer(self) -> Iterator["ResultStore"]:
        """Acquire the single-writer lock for the duration of the block."""
        if self._lock_held:
            yield self
            return
        try:
            fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreLockError(
                f"store {self.root} already has a writer (lock file "
                f"{self._lock_path}; remove it if stale)"
            ) from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            self._lock_held = True
            yield self
        finally:
            self._lock_held = False
            try:
                self._lock_path.unlink()
            except FileNotFoundError:
                pass

    # -- persistence ---------------------------------------------------------

    def _kind_path(self, kind: str) -> Path:
        if kind not in COLUMNS:
            raise ValueError(f"unknown row kind {kind!r}")
        return self.root / f"{kind}.csv"

    def persist(self, rows: Iterable[ResultRow]) -> None:
        """Append rows to their kind files (acquires the lock if needed)."""
        rows = list(rows)
        if not rows:
            return
        with self.writer():
            by_kind: dict[str, list[ResultRow]] = {}
            for row in rows:
                by_kind.setdefault(row.kind, []).append(row)
            for kind, kind_rows in by_kind.items():
                path = self._kind_path(kind)
                columns = COLUMNS[kind]
                new_file = not path.exists()
                with path.open("a", newline="") as fh:
                    writer = csv.writer(fh)
                    if new_file:
                        writer.writerow([*columns, "extras"])
                    for row in kind_rows:
                        extras = {
                            k: v for k, v in row.data.items() if k not in columns
                        }
                        writer.writerow(
                            [_encode(row.data.get(c)) for c in columns]
                            + [_encode(extras or None)]
                        )

    def load(self, kind: str | None = None, **filters: Any) -> list[ResultRow]:
        """Read rows back, optionally filtered by kind and column equality."""
        kinds = [kind] if kind else list(COLUMNS)
        out: list[ResultRow] = []
        for k in kinds:
            path = self._kind_path(k)
            if not path.exists():
                continue
            with path.open(newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader, None)
                if header is None:
                    continue
                for raw in reader:
                    data: dict[str, Any] = {}
                    for column, value in zip(header, raw):
                        if column == "extras":
                            extras = _decode("extras", value)
                            if extras:
                                data.update(extras)
                        else:
                            data[column] = _decode(column, value)
                    row = ResultRow(kind=k, data=data)
                    if row.matches(**filters):
                        out.append(row)
        return out

    def has_point(self, kind: str, benchmark: str, config: CryptoConfig, threads: int) -> bool:
        return bool(
            self.load(
                kind,
                benchmark=benchmark,
                thread_count=threads,
                **_config_columns(config),
            )
        )


def _encode(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    if isinstance(value, datetime):
        return value.isoformat()
    if isinstance(value, (RunPhase, SecurityStandard)):
        return value.value
    return str(value)


def _decode(column: str, value: str) -> Any:
    if value == "":
        return None
    if column in _JSON_COLUMNS:
        return json.loads(value)
    if column in _INT_COLUMNS:
        return int(value)
    if column in _FLOAT_COLUMNS:
        return float(value)
    if column in _BOOL_COLUMNS:
        return value == "true"
    if column == "timestamp":
        return datetime.fromisoformat(value)
    return value


def _config_columns(config: CryptoConfig) -> dict[str, Any]:
    return {
        "log2_ring_dim": config.log2_ring_dim,
        "depth": config.depth,
        "batch_size": config.batch_size,
        "security_standard": config.security_standard.value,
    }


# -- conversions --------------------------------------------------------------


def row_from_measurement(record: MeasurementRecord, pass_name: str = "runtime") -> ResultRow:
    reps = (
        record.self_report.repetitions_executed if record.self_report else None
    )
    return ResultRow(
        "measurement",
        {
            "benchmark": record.benchmark,
            "phase": record.phase.value,
            "pass": pass_name,
            **_config_columns(record.config),
            "thread_count": record.thread_count,
            "run_index": record.run_index,
            "wall_time_s": record.wall_time,
            "energy_j": record.energy,
            "event_counts": record.event_counts or None,
            "repetitions": reps,
            "exit_status": record.exit_status,
            "timestamp": record.timestamp,
        },
    )


def row_from_denoised(metrics: DenoisedMetrics) -> ResultRow:
    return ResultRow(
        "denoised",
        {
            "benchmark": metrics.benchmark,
            **_config_columns(metrics.config),
            "thread_count": metrics.thread_count,
            "roi_time_s": metrics.roi_time,
            "roi_energy_j": metrics.roi_energy,
            "avg_power_w": metrics.avg_power,
            "ipc": metrics.ipc,
            "roi_events": metrics.roi_events or None,
            "per_call_time_s": metrics.per_call_time,
            "per_call_energy_j": metrics.per_call_energy,
            "calls": metrics.calls,
            "denoised": True,
        },
    )


def denoised_from_row(row: ResultRow) -> DenoisedMetrics:
    data = row.data
    return DenoisedMetrics(
        benchmark=data["benchmark"],
        config=row.config(),
        thread_count=data["thread_count"],
        roi_time=data["roi_time_s"],
        roi_energy=data.get("roi_energy_j"),
        avg_power=data.get("avg_power_w"),
        ipc=data.get("ipc"),
        roi_events=data.get("roi_events") or {},
        per_call_time=data.get("per_call_time_s"),
        per_call_energy=data.get("per_call_energy_j"),
        calls=data.get("calls") or 1,
    )


def row_from_prediction(prediction: Prediction, predict_seconds: float | None = None) -> ResultRow:
    config, threads = prediction.key
    contributions = {
        name: {
            "time_share": c.time_share,
            **({"energy_share": c.energy_share} if c.energy_share is not None else {}),
        }
        for name, c in prediction.contributions.items()
    }
    return ResultRow(
        "prediction",
        {
            "benchmark": prediction.benchmark,
            **_config_columns(config),
            "thread_count": threads,
            "total_time_s": prediction.total_time,
            "total_energy_j": prediction.total_energy,
            "contributions": contributions or None,
            "predict_seconds": predict_seconds,
        },
    )


def prediction_from_row(row: ResultRow) -> Prediction:
    data = row.data
    key: CostKey = (row.config(), data["thread_count"])
    contributions = {
        name: Contribution(
            time_share=doc["time_share"], energy_share=doc.get("energy_share")
        )
        for name, doc in (data.get("contributions") or {}).items()
    }
    return Prediction(
        benchmark=data["benchmark"],
        key=key,
        total_time=data["total_time_s"],
        total_energy=data.get("total_energy_j"),
        contributions=contributions,
    )


def row_from_validation(
    benchmark: str,
    key: CostKey,
    eps_time: float,
    eps_energy: float | None = None,
    cosine: float | None = None,
) -> ResultRow:
    config, threads = key
    return ResultRow(
        "validation",
        {
            "benchmark": benchmark,
            **_config_columns(config),
            "thread_count": threads,
            "eps_time": eps_time,
            "eps_energy": eps_energy,
            "cosine": cosine,
        },
    )
