"""Additive cost model: application runtime/energy from primitive costs.

An application's cost is the count-weighted sum of per-primitive per-call
costs measured at one exact (crypto config, thread count) key. There is no
interpolation between keys: predicting at an unprofiled key is a hard
coverage error rather than a silently wrong nearest-config guess.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .denoise import DenoisedMetrics
from .errors import CoverageError
from .registry import AbstractionLevel, CryptoConfig, OpCountManifest

logger = logging.getLogger(__name__)

CostKey = tuple[CryptoConfig, int]


@dataclass(frozen=True)
class PrimitiveCost:
    """Per-call cost of one primitive at a fixed key."""

    time: float
    energy: float | None = None

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"per-call time must be > 0, got {self.time}")
        if self.energy is not None and not self.energy > 0:
            raise ValueError(f"per-call energy must be > 0, got {self.energy}")


class PrimitiveCostTable:
    """Measured per-call costs keyed by (CryptoConfig, thread_count)."""

    def __init__(self):
        self._entries: dict[CostKey, dict[str, PrimitiveCost]] = {}

    def add(
        self,
        config: CryptoConfig,
        threads: int,
        primitive: str,
        time: float,
        energy: float | None = None,
    ) -> None:
        key = (config, threads)
        self._entries.setdefault(key, {})[primitive] = PrimitiveCost(time, energy)

    def get(self, key: CostKey) -> Mapping[str, PrimitiveCost]:
        return self._entries.get(key, {})

    def keys(self) -> list[CostKey]:
        return list(self._entries)

    def lookup(self, primitive: str, key: CostKey) -> PrimitiveCost:
        cost = self._entries.get(key, {}).get(primitive)
        if cost is None:
            raise CoverageError(primitive, _key_str(key))
        return cost

    @classmethod
    def from_denoised(cls, metrics: Iterable[DenoisedMetrics]) -> "PrimitiveCostTable":
        """Build a table from per-call denoised primitive measurements."""
        table = cls()
        for m in metrics:
            if m.per_call_time is None or not m.per_call_time > 0:
                continue
            table.add(
                m.config, m.thread_count, m.benchmark, m.per_call_time, m.per_call_energy
            )
        return table


@dataclass(frozen=True)
class Contribution:
    time_share: float
    energy_share: float | None = None


@dataclass
class Prediction:
    """Model output: totals plus per-primitive shares at one key."""

    benchmark: str
    key: CostKey
    total_time: float
    total_energy: float | None
    contributions: dict[str, Contribution] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)


def predict(
    manifest: OpCountManifest, table: PrimitiveCostTable, key: CostKey
) -> Prediction:
    """total = sum over primitives of count x per-call cost at ``key``.

    Zero-count primitives are omitted; a positive-count primitive without a
    table entry raises CoverageError. Energy totals are produced only when
    every contributing primitive has an energy entry.
    """
    active = manifest.nonzero()
    time_terms: dict[str, float] = {}
    energy_terms: dict[str, float] = {}
    energy_complete = True
    for name, count in active.items():
        cost = table.lookup(name, key)
        time_terms[name] = count * cost.time
        if cost.energy is None:
            energy_complete = False
        else:
            energy_terms[name] = count * cost.energy
    total_time = math.fsum(time_terms.values())
    total_energy = None
    if active and energy_complete:
        total_energy = math.fsum(energy_terms.values())
    elif active and energy_terms:
        logger.warning(
            "%s: energy costs incomplete at %s; energy prediction omitted",
            manifest.benchmark,
            _key_str(key),
        )
    if not active:
        total_energy = 0.0

    contributions: dict[str, Contribution] = {}
    for name in active:
        time_share = time_terms[name] / total_time if total_time > 0 else 0.0
        energy_share = None
        if total_energy is not None and total_energy > 0:
            energy_share = energy_terms[name] / total_energy
        contributions[name] = Contribution(time_share, energy_share)

    return Prediction(
        benchmark=manifest.benchmark,
        key=key,
        total_time=total_time,
        total_energy=total_energy,
        contributions=contributions,
        counts=dict(active),
    )


def breakdown(prediction: Prediction) -> list[tuple[str, float]]:
    """Contributions sorted by descending time share, renormalized to 1."""
    if not prediction.total_time > 0:
        raise ValueError("breakdown requires a positive prediction total")
    shares = {
        name: c.time_share for name, c in prediction.contributions.items()
    }
    norm = math.fsum(shares.values())
    ranked = sorted(shares.items(), key=lambda item: (-item[1], item[0]))
    return [(name, share / norm) for name, share in ranked]


def validate(
    prediction: Prediction, measured: DenoisedMetrics
) -> tuple[float, float | None]:
    """Signed relative errors (time, energy): predicted/actual - 1."""
    if not measured.roi_time > 0:
        raise ValueError("measured ROI time must be > 0")
    eps_time = prediction.total_time / measured.roi_time - 1.0
    eps_energy = None
    if (
        prediction.total_energy is not None
        and measured.roi_energy is not None
        and measured.roi_energy > 0
    ):
        eps_energy = prediction.total_energy / measured.roi_energy - 1.0
    return eps_time, eps_energy


def aggregate_geomean(errors: Sequence[float]) -> float:
    """Sign-preserving ratio geomean: (prod(1 + e_i))^(1/n) - 1.

    A systematically underestimating group yields a negative result.
    """
    if not errors:
        raise ValueError("aggregate_geomean requires at least one error")
    for eps in errors:
        if not 1.0 + eps > 0:
            raise ValueError(f"error {eps} implies a nonpositive prediction ratio")
    return math.exp(math.fsum(math.log1p(e) for e in errors) / len(errors)) - 1.0


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Inner-product cosine of two same-length contribution vectors."""
    if len(a) != len(b):
        raise ValueError(f"vector lengths differ: {len(a)} vs {len(b)}")
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(x * x for x in b))
    if norm_a == 0 or norm_b == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    dot = math.fsum(x * y for x, y in zip(a, b))
    return dot / (norm_a * norm_b)


@dataclass
class AlgorithmComparison:
    """What-if outcome: how much faster/leaner manifest B is than A."""

    speedup: float
    energy_reduction: float | None
    key_a: CostKey
    key_b: CostKey
    prediction_a: Prediction
    prediction_b: Prediction

    @property
    def same_key(self) -> bool:
        return self.key_a == self.key_b


def compare_algorithms(
    manifest_a: OpCountManifest,
    manifest_b: OpCountManifest,
    table: PrimitiveCostTable,
    key: CostKey,
    key_b: CostKey | None = None,
) -> AlgorithmComparison:
    """Predict both manifests and report time/energy ratios (A over B).

    ``key_b`` supports comparing algorithms profiled at different depths;
    the result records both keys so reports can state which was used.
    """
    key_b = key_b or key
    pa = predict(manifest_a, table, key)
    pb = predict(manifest_b, table, key_b)
    if not pa.total_time > 0 or not pb.total_time > 0:
        raise ValueError("both manifests must predict a positive total time")
    energy_reduction = None
    if pa.total_energy and pb.total_energy:
        energy_reduction = pa.total_energy / pb.total_energy
    return AlgorithmComparison(
        speedup=pa.total_time / pb.total_time,
        energy_reduction=energy_reduction,
        key_a=key,
        key_b=key_b,
        prediction_a=pa,
        prediction_b=pb,
    )


@dataclass
class ValidationEntry:
    benchmark: str
    level: AbstractionLevel
    eps_time: float
    eps_energy: float | None = None
    cosine: float | None = None


@dataclass
class ValidationReport:
    """Per-benchmark signed errors plus per-level geomeans."""

    entries: list[ValidationEntry]

    def geomean(self, level: AbstractionLevel | None = None, metric: str = "time") -> float:
        values = [
            e.eps_time if metric == "time" else e.eps_energy
            for e in self.entries
            if (level is None or e.level == level)
        ]
        values = [v for v in values if v is not None]
        return aggregate_geomean(values)

    def render_table(self) -> str:
        # Signed ratio geomean definition is documented in the output so
        # reported aggregates are unambiguous.
        lines = [
            f"{'benchmark':<24} {'level':<16} {'time err':>10} {'energy err':>11} {'cosine':>8}",
            "-" * 74,
        ]
        for e in sorted(self.entries, key=lambda x: (x.level, x.benchmark)):
            energy = f"{e.eps_energy:+.2%}" if e.eps_energy is not None else "-"
            cosine = f"{e.cosine:.4f}" if e.cosine is not None else "-"
            lines.append(
                f"{e.benchmark:<24} {str(e.level):<16} {e.eps_time:+10.2%} {energy:>11} {cosine:>8}"
            )
        for level in (AbstractionLevel.MICROBENCHMARK, AbstractionLevel.WORKLOAD):
            group = [e for e in self.entries if e.level == level]
            if group:
                lines.append(
                    f"geomean ({level}, time): {self.geomean(level):+.2%}"
                )
        lines.append("geomean = (prod(1 + err_i))^(1/n) - 1 over the group")
        return "\n".join(lines)


def _key_str(key: CostKey) -> str:
    config, threads = key
    return (
        f"(N=2^{config.log2_ring_dim}, L={config.depth}, batch={config.batch_size}, "
        f"std={config.security_standard}, threads={threads})"
    )
