"""Region-of-interest isolation: subtract setup-phase from full-phase runs.

Subtracting the setup (deserialization-only) measurement from the full
measurement removes one-time initialization from timing, energy, and every
shared event counter. Derived metrics (average power, IPC, per-call values)
are computed only on denoised data, never on raw records.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .profiler import MeasurementRecord
from .protocol import RunPhase
from .registry import CryptoConfig

logger = logging.getLogger(__name__)

INSTRUCTIONS_EVENT = "instructions"
CYCLES_EVENT = "cpu-cycles"


@dataclass
class DenoisedMetrics:
    """Setup-subtracted metrics for one (benchmark, config, threads) point."""

    benchmark: str
    config: CryptoConfig
    thread_count: int
    roi_time: float
    roi_energy: float | None = None
    avg_power: float | None = None
    ipc: float | None = None
    roi_events: dict[str, float] = field(default_factory=dict)
    per_call_time: float | None = None
    per_call_energy: float | None = None
    per_call_events: dict[str, float] = field(default_factory=dict)
    calls: int = 1


def denoise(full: MeasurementRecord, setup: MeasurementRecord) -> DenoisedMetrics:
    """ROI metrics = full-phase minus setup-phase, clamped at zero.

    Inputs must be aggregated records for the same benchmark, config, and
    thread count, with phases FULL and SETUP respectively. Events present
    in only one record are dropped with a warning; negative deltas clamp
    to zero (per-field warnings) so downstream statistics stay non-negative.
    """
    if (full.benchmark, full.config, full.thread_count) != (
        setup.benchmark,
        setup.config,
        setup.thread_count,
    ):
        raise ValueError("denoise requires homogeneous full/setup records")
    if full.phase is not RunPhase.FULL or setup.phase is not RunPhase.SETUP:
        raise ValueError(
            f"expected FULL minus SETUP, got {full.phase} minus {setup.phase}"
        )

    roi_time = full.wall_time - setup.wall_time
    if roi_time < 0:
        logger.warning(
            "%s: negative ROI (full %.6f s < setup %.6f s); clamped to 0",
            full.benchmark,
            full.wall_time,
            setup.wall_time,
        )
        roi_time = 0.0

    roi_energy = None
    if full.energy is not None and setup.energy is not None:
        roi_energy = full.energy - setup.energy
        if roi_energy < 0:
            logger.warning(
                "%s: negative ROI energy (%.3f J); clamped to 0",
                full.benchmark,
                roi_energy,
            )
            roi_energy = 0.0
    elif full.energy is not None or setup.energy is not None:
        logger.warning(
            "%s: energy present in only one phase; ROI energy absent",
            full.benchmark,
        )

    roi_events: dict[str, float] = {}
    shared = set(full.event_counts) & set(setup.event_counts)
    dropped = set(full.event_counts) ^ set(setup.event_counts)
    if dropped:
        logger.warning(
            "%s: events %s present in only one phase; dropped",
            full.benchmark,
            sorted(dropped),
        )
    for name in sorted(shared):
        delta = full.event_counts[name] - setup.event_counts[name]
        if delta < 0:
            logger.warning(
                "%s: negative ROI count for %s (%s); clamped to 0",
                full.benchmark,
                name,
                delta,
            )
            delta = 0
        roi_events[name] = delta

    return DenoisedMetrics(
        benchmark=full.benchmark,
        config=full.config,
        thread_count=full.thread_count,
        roi_time=roi_time,
        roi_energy=roi_energy,
        roi_events=roi_events,
    )


def derive(metrics: DenoisedMetrics) -> DenoisedMetrics:
    """Populate average power and IPC from the denoised quantities."""
    avg_power = None
    if metrics.roi_energy is not None:
        if metrics.roi_time > 0:
            avg_power = metrics.roi_energy / metrics.roi_time
        else:
            logger.warning(
                "%s: zero ROI time; average power unavailable", metrics.benchmark
            )
    ipc = None
    instructions = metrics.roi_events.get(INSTRUCTIONS_EVENT)
    cycles = metrics.roi_events.get(CYCLES_EVENT)
    if instructions is not None and cycles is not None:
        if cycles > 0:
            ipc = instructions / cycles
        else:
            logger.warning(
                "%s: degenerate cycle count (0); IPC unavailable", metrics.benchmark
            )
    return replace(metrics, avg_power=avg_power, ipc=ipc)


def per_call(metrics: DenoisedMetrics, calls: int) -> DenoisedMetrics:
    """Average the ROI across a primitive's internal repetitions.

    Per-call event counts stay real-valued; rounding is a display concern.
    """
    if calls < 1:
        raise ValueError(f"calls must be >= 1, got {calls}")
    return replace(
        metrics,
        calls=calls,
        per_call_time=metrics.roi_time / calls,
        per_call_energy=(
            metrics.roi_energy / calls if metrics.roi_energy is not None else None
        ),
        per_call_events={k: v / calls for k, v in metrics.roi_events.items()},
    )


def setup_overhead_pct(roi_time: float, setup_time: float) -> float:
    """Relative initialization overhead, in percent of the ROI."""
    if roi_time <= 0:
        raise ValueError("overhead is undefined for zero ROI")
    return 100.0 * setup_time / roi_time
