"""Benchmark catalog: abstraction levels, crypto parameter sets, operation-count manifests.

The built-in catalog covers three abstraction levels (primitives,
microbenchmarks, workloads) and is loaded from human-editable YAML documents
under ``fheprof/data/benchmarks/`` (one document per benchmark) plus
``fheprof/data/security_standards.yaml``. The registry is read-only after
initialization and safe for concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .errors import ConfigError, UnknownBenchmarkError

logger = logging.getLogger(__name__)

# Reserved manifest key for operations not (yet) registered as primitives.
OTHER_KEY = "other"

LOG2_RING_DIM_MIN = 13
LOG2_RING_DIM_MAX = 17


class AbstractionLevel(IntEnum):
    """Benchmark abstraction level; total order is ascending complexity."""

    PRIMITIVE = 0
    MICROBENCHMARK = 1
    WORKLOAD = 2

    @classmethod
    def parse(cls, text: str) -> "AbstractionLevel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown abstraction level {text!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


class SecurityStandard(Enum):
    """Predefined bit-security parameter sets (HE standard), or NONE."""

    NONE = "none"
    BITS_128 = "128-bit"
    BITS_192 = "192-bit"
    BITS_256 = "256-bit"

    @classmethod
    def parse(cls, text: str) -> "SecurityStandard":
        text = str(text).strip().lower()
        for member in cls:
            if text in (member.value, member.name.lower()):
                return member
        # Accept bare bit counts ("128") for CLI convenience.
        if text in ("128", "192", "256"):
            return cls(f"{text}-bit")
        raise ValueError(f"unknown security standard {text!r}")

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class CryptoConfig:
    """CKKS parameter set: ring dimension exponent, depth, slots, standard.

    Construction never raises for out-of-range values; ``validate_config``
    reports violations as data so invalid candidates can be inspected.
    """

    log2_ring_dim: int
    depth: int
    batch_size: int
    security_standard: SecurityStandard = SecurityStandard.NONE

    @property
    def ring_dim(self) -> int:
        return 1 << self.log2_ring_dim

    @property
    def max_batch_size(self) -> int:
        # CKKS packs at most N/2 slots.
        return 1 << (self.log2_ring_dim - 1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "log2_ring_dim": self.log2_ring_dim,
            "depth": self.depth,
            "batch_size": self.batch_size,
            "security_standard": self.security_standard.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CryptoConfig":
        return cls(
            log2_ring_dim=int(data["log2_ring_dim"]),
            depth=int(data["depth"]),
            batch_size=int(data["batch_size"]),
            security_standard=SecurityStandard.parse(
                data.get("security_standard", "none")
            ),
        )


def config_hash(config: CryptoConfig) -> str:
    """Stable short hash of a config, used as the artifact-cache key."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class Violation:
    field: str
    value: Any
    message: str

    def __str__(self) -> str:
        return f"{self.field}={self.value}: {self.message}"


def validate_config(config: CryptoConfig) -> list[Violation]:
    """Return every violated CryptoConfig invariant (empty list means ok)."""
    violations: list[Violation] = []
    if not (LOG2_RING_DIM_MIN <= config.log2_ring_dim <= LOG2_RING_DIM_MAX):
        violations.append(
            Violation(
                "log2_ring_dim",
                config.log2_ring_dim,
                f"outside supported range [{LOG2_RING_DIM_MIN}, {LOG2_RING_DIM_MAX}]",
            )
        )
    if config.depth < 1:
        violations.append(Violation("depth", config.depth, "must be >= 1"))
    if config.batch_size < 1:
        violations.append(Violation("batch_size", config.batch_size, "must be >= 1"))
    elif config.batch_size != 1 and config.batch_size & (config.batch_size - 1):
        violations.append(
            Violation("batch_size", config.batch_size, "must be a power of two or 1")
        )
    if (
        LOG2_RING_DIM_MIN <= config.log2_ring_dim <= LOG2_RING_DIM_MAX
        and config.batch_size > config.max_batch_size
    ):
        violations.append(
            Violation(
                "batch_size",
                config.batch_size,
                f"exceeds slot capacity N/2 = {config.max_batch_size}",
            )
        )
    return violations


@dataclass(frozen=True)
class BenchmarkSpec:
    """A registered benchmark: identity, level, runner binding, defaults."""

    name: str
    level: AbstractionLevel
    default_config: CryptoConfig
    runner: str | None = None
    title: str | None = None
    extra_params: Mapping[str, Any] = field(default_factory=dict)

    def display_name(self) -> str:
        return self.title or self.name


@dataclass(frozen=True)
class OpCountManifest:
    """Per-benchmark map from primitive name to invocation count."""

    benchmark: str
    counts: Mapping[str, int]

    def __post_init__(self):
        for name, count in self.counts.items():
            if count < 0:
                raise ValueError(f"manifest {self.benchmark}: count for {name} < 0")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def nonzero(self) -> dict[str, int]:
        return {k: v for k, v in self.counts.items() if v > 0}

    def scaled(self, k: int) -> "OpCountManifest":
        if k < 0:
            raise ValueError("scale factor must be >= 0")
        return OpCountManifest(self.benchmark, {n: c * k for n, c in self.counts.items()})


class BenchmarkRegistry:
    """Catalog of benchmarks, manifests, and security-standard overrides."""

    def __init__(self, security_table: Mapping[str, Mapping[int, int]] | None = None):
        self._specs: dict[str, BenchmarkSpec] = {}
        self._manifests: dict[str, dict[str, int]] = {}
        # standard value -> {log2_ring_dim: max depth}
        self._security_table: dict[str, dict[int, int]] = {
            std: dict(caps) for std, caps in (security_table or {}).items()
        }

    # -- population -------------------------------------------------------

    def register(self, spec: BenchmarkSpec, manifest: Mapping[str, int] | None = None) -> None:
        if spec.name in self._specs:
            raise ValueError(f"duplicate benchmark name {spec.name!r}")
        self._specs[spec.name] = spec
        if manifest is not None:
            counts = {str(k): int(v) for k, v in manifest.items()}
            if counts and not any(v > 0 for v in counts.values()):
                raise ValueError(f"manifest for {spec.name!r} has no positive count")
            self._manifests[spec.name] = counts

    def finalize(self) -> "BenchmarkRegistry":
        """Validate cross-references once population is complete."""
        primitives = set(self.primitive_names())
        for name, counts in self._manifests.items():
            unknown = set(counts) - primitives - {OTHER_KEY}
            if unknown:
                raise ValueError(
                    f"manifest for {name!r} references unregistered primitives: {sorted(unknown)}"
                )
        return self

    @classmethod
    def from_dir(cls, path: Path) -> "BenchmarkRegistry":
        """Load a registry from a directory of per-benchmark YAML documents."""
        security_path = path / "security_standards.yaml"
        table = {}
        if security_path.exists():
            raw = yaml.safe_load(security_path.read_text()) or {}
            table = {
                SecurityStandard.parse(std).value: {int(k): int(v) for k, v in caps.items()}
                for std, caps in raw.items()
            }
        registry = cls(security_table=table)
        bench_dir = path / "benchmarks"
        for doc_path in sorted(bench_dir.glob("*.yaml")):
            doc = yaml.safe_load(doc_path.read_text())
            spec = BenchmarkSpec(
                name=doc["name"],
                level=AbstractionLevel.parse(doc["level"]),
                default_config=CryptoConfig.from_dict(doc["default_config"]),
                runner=doc.get("runner"),
                title=doc.get("title"),
                extra_params=doc.get("extra_params") or {},
            )
            registry.register(spec, doc.get("manifest"))
        return registry.finalize()

    @classmethod
    def builtin(cls) -> "BenchmarkRegistry":
        """The catalog shipped with the package."""
        with resources.as_file(resources.files("fheprof") / "data") as data_dir:
            return cls.from_dir(Path(data_dir))

    # -- queries ----------------------------------------------------------

    def list_benchmarks(
        self, level_filter: AbstractionLevel | None = None
    ) -> list[BenchmarkSpec]:
        specs = [
            s
            for s in self._specs.values()
            if level_filter is None or s.level == level_filter
        ]
        return sorted(specs, key=lambda s: (s.level, s.name))

    def primitive_names(self) -> list[str]:
        return [s.name for s in self.list_benchmarks(AbstractionLevel.PRIMITIVE)]

    def get(self, name: str) -> BenchmarkSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise UnknownBenchmarkError(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def get_manifest(self, benchmark: str) -> OpCountManifest:
        """Full operation-count column for a microbenchmark or workload.

        The returned counts cover every registered primitive (zero-filled)
        plus any reserved keys present in the stored document.
        """
        spec = self.get(benchmark)
        if spec.level == AbstractionLevel.PRIMITIVE:
            raise UnknownBenchmarkError(
                benchmark, "primitives have no operation-count manifest"
            )
        if benchmark not in self._manifests:
            raise UnknownBenchmarkError(benchmark, "no manifest registered")
        stored = self._manifests[benchmark]
        counts = {name: 0 for name in self.primitive_names()}
        counts.update(stored)
        return OpCountManifest(benchmark, counts)

    # -- configuration resolution ------------------------------------------

    def resolve_config(
        self,
        spec: BenchmarkSpec | str,
        overrides: Mapping[str, Any] | None = None,
    ) -> CryptoConfig:
        """Merge overrides onto a benchmark's defaults and enforce standards.

        When the merged security standard is not NONE, the standard's depth
        cap for the chosen ring dimension takes precedence over defaults and
        overrides; the conflict is logged as a warning. Raises ConfigError
        when the merged result violates CryptoConfig invariants.
        """
        if isinstance(spec, str):
            spec = self.get(spec)
        merged = spec.default_config.to_dict()
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in merged:
                raise ValueError(f"unknown CryptoConfig field {key!r}")
            merged[key] = value
        config = CryptoConfig.from_dict(merged)
        config = self._apply_standard(config, benchmark=spec.name)
        violations = validate_config(config)
        if violations:
            raise ConfigError(
                f"invalid configuration for {spec.name!r}: "
                + "; ".join(str(v) for v in violations),
                violations,
            )
        return config

    def _apply_standard(self, config: CryptoConfig, benchmark: str) -> CryptoConfig:
        if config.security_standard is SecurityStandard.NONE:
            return config
        caps = self._security_table.get(config.security_standard.value)
        if not caps:
            raise ConfigError(
                f"no parameter table for standard {config.security_standard}"
            )
        if config.log2_ring_dim not in caps:
            raise ConfigError(
                f"standard {config.security_standard} has no entry for "
                f"log2_ring_dim={config.log2_ring_dim}"
            )
        max_depth = caps[config.log2_ring_dim]
        if config.depth > max_depth:
            logger.warning(
                "%s: depth %d conflicts with %s standard at N=2^%d; mandated cap %d applied",
                benchmark,
                config.depth,
                config.security_standard,
                config.log2_ring_dim,
                max_depth,
            )
            config = replace(config, depth=max_depth)
        return config


def list_benchmarks(
    registry: BenchmarkRegistry, level_filter: AbstractionLevel | None = None
) -> list[BenchmarkSpec]:
    return registry.list_benchmarks(level_filter)


def get_manifest(registry: BenchmarkRegistry, benchmark: str) -> OpCountManifest:
    return registry.get_manifest(benchmark)


def resolve_config(
    registry: BenchmarkRegistry,
    spec: BenchmarkSpec | str,
    overrides: Mapping[str, Any] | None = None,
) -> CryptoConfig:
    return registry.resolve_config(spec, overrides)


def manifest_from_file(path: Path, primitives: Iterable[str] | None = None) -> OpCountManifest:
    """Load a user-supplied manifest document (YAML or JSON mapping)."""
    doc = yaml.safe_load(Path(path).read_text())
    if isinstance(doc, Mapping) and "counts" in doc:
        name = str(doc.get("benchmark", Path(path).stem))
        counts = doc["counts"]
    elif isinstance(doc, Mapping):
        name = Path(path).stem
        counts = doc
    else:
        raise ValueError(f"{path}: expected a mapping of primitive -> count")
    counts = {str(k): int(v) for k, v in counts.items()}
    if primitives is not None:
        known = set(primitives) | {OTHER_KEY}
        unknown = set(counts) - known
        if unknown:
            raise ValueError(f"{path}: unknown primitives {sorted(unknown)}")
    return OpCountManifest(name, counts)
