"""Command-line interface.

Subcommands: ``bench list|show``, ``sweep plan|run``, ``profile``,
``flamegraph``, ``predict``, ``validate``, ``compare``, ``report``.
Exit code is 0 only when no requested work failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import flamegraph as fg
from . import orchestrator as orch
from .denoise import denoise, derive, per_call
from .errors import FheprofError
from .model import (
    PrimitiveCostTable,
    breakdown,
    compare_algorithms,
    predict,
    validate,
)
from .profiler import EventSet, Profiler, aggregate_median
from .protocol import RunPhase, build_invocation, compute_repetitions
from .registry import (
    AbstractionLevel,
    BenchmarkRegistry,
    CryptoConfig,
    SecurityStandard,
    manifest_from_file,
)
from .store import (
    ResultStore,
    denoised_from_row,
    row_from_denoised,
    row_from_measurement,
    row_from_prediction,
    row_from_validation,
)

logger = logging.getLogger(__name__)


def _load_registry(args) -> BenchmarkRegistry:
    if args.registry:
        return BenchmarkRegistry.from_dir(Path(args.registry))
    return BenchmarkRegistry.builtin()


def _parse_at(text: str) -> dict:
    """Parse ``--at`` keys: ``N=16,L=10,batch=4096,std=none,threads=8``."""
    fields = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        fields[key.strip().lower()] = value.strip()
    try:
        config = CryptoConfig(
            log2_ring_dim=int(fields["n"]),
            depth=int(fields["l"]),
            batch_size=int(fields.get("batch", 0) or 0),
            security_standard=SecurityStandard.parse(fields.get("std", "none")),
        )
        threads = int(fields.get("threads", 1))
    except KeyError as exc:
        raise ValueError(f"--at is missing field {exc}; expected N=..,L=..[,batch=..,std=..,threads=..]")
    return {"config": config, "threads": threads}


def _cost_table_at(store: ResultStore, config: CryptoConfig, threads: int, batch_known: bool):
    rows = store.load("denoised", thread_count=threads)
    metrics = [denoised_from_row(r) for r in rows]
    if not batch_known:
        # --at omitted batch: accept any batch at the (N, L, std) key.
        metrics = [
            m
            for m in metrics
            if (m.config.log2_ring_dim, m.config.depth, m.config.security_standard)
            == (config.log2_ring_dim, config.depth, config.security_standard)
        ]
        if metrics:
            config = metrics[0].config
    table = PrimitiveCostTable.from_denoised(metrics)
    return table, (config, threads)


def cmd_bench(args) -> int:
    registry = _load_registry(args)
    if args.action == "list":
        level = AbstractionLevel.parse(args.level) if args.level else None
        rows = registry.list_benchmarks(level)
        print(f"{'name':<26} {'level':<16} {'N':>6} {'L':>4} {'batch':>7} {'std':>8}")
        print("-" * 72)
        for spec in rows:
            cfg = spec.default_config
            print(
                f"{spec.name:<26} {str(spec.level):<16} 2^{cfg.log2_ring_dim:<4} "
                f"{cfg.depth:>4} {cfg.batch_size:>7} {cfg.security_standard.value:>8}"
            )
        return 0
    # show
    spec = registry.get(args.name)
    cfg = spec.default_config
    print(f"name:    {spec.name}")
    if spec.title:
        print(f"title:   {spec.title}")
    print(f"level:   {spec.level}")
    print(f"runner:  {spec.runner or '-'}")
    print(
        f"default: N=2^{cfg.log2_ring_dim} L={cfg.depth} batch={cfg.batch_size} "
        f"std={cfg.security_standard}"
    )
    if spec.extra_params:
        print(f"extra:   {dict(spec.extra_params)}")
    if spec.level != AbstractionLevel.PRIMITIVE:
        try:
            manifest = registry.get_manifest(spec.name)
        except FheprofError as exc:
            print(f"manifest: unavailable ({exc})")
        else:
            print(f"manifest (total {manifest.total} operations):")
            for name, count in sorted(
                manifest.counts.items(), key=lambda item: (-item[1], item[0])
            ):
                print(f"  {name:<24} {count:>8}")
    return 0


def cmd_sweep(args) -> int:
    registry = _load_registry(args)
    spec = orch.SweepSpec.from_yaml(Path(args.specfile))
    plan = orch.generate_sweep(spec, registry)
    if args.action == "plan":
        sys.stdout.write(plan.serialize())
        if plan.dropped:
            print(f"# dropped {len(plan.dropped)} invalid combinations", file=sys.stderr)
        return 0
    store = ResultStore(Path(args.store))
    profiler = Profiler()
    summary = orch.execute_plan(plan, profiler, store, work_dir=Path(args.workdir))
    print(summary.render())
    return 0 if summary.all_ok else 1


def cmd_profile(args) -> int:
    registry = _load_registry(args)
    spec = registry.get(args.benchmark)
    config = registry.resolve_config(spec, {})
    store = ResultStore(Path(args.store))
    if args.events is None:
        events = None
    elif args.events:
        events = EventSet.from_events(args.events)
    else:
        events = EventSet.default()  # bare --events: the full catalog
    reps = 1
    if spec.level == AbstractionLevel.PRIMITIVE:
        reps = compute_repetitions(
            float(spec.extra_params.get("per_call_estimate_s", orch.DEFAULT_PER_CALL_ESTIMATE))
        )
    work_dir = Path(args.workdir)
    profiler = Profiler()
    records = {}
    for phase in (RunPhase.SETUP, RunPhase.FULL):
        invocation = build_invocation(
            spec, config, phase, args.threads, reps, work_dir / "configs"
        )
        measured = profiler.measure(invocation, events=events, runs=args.runs, config=config)
        if not measured:
            print(f"no admitted {phase.value} records; aborting", file=sys.stderr)
            return 1
        store.persist(row_from_measurement(r, "events" if events else "runtime") for r in measured)
        records[phase] = measured
    metrics = derive(
        denoise(
            aggregate_median(records[RunPhase.FULL]),
            aggregate_median(records[RunPhase.SETUP]),
        )
    )
    if spec.level == AbstractionLevel.PRIMITIVE:
        metrics = per_call(metrics, reps)
    store.persist([row_from_denoised(metrics)])
    print(f"{spec.name}: ROI {metrics.roi_time:.4f} s", end="")
    if metrics.roi_energy is not None:
        print(f", {metrics.roi_energy:.2f} J, {metrics.avg_power:.1f} W", end="")
    if metrics.per_call_time is not None:
        print(f", per-call {metrics.per_call_time * 1e3:.3f} ms", end="")
    if metrics.ipc is not None:
        print(f", IPC {metrics.ipc:.2f}", end="")
    print()
    return 0


def cmd_flamegraph(args) -> int:
    registry = _load_registry(args)
    spec = registry.get(args.benchmark)
    config = registry.resolve_config(spec, {})
    invocation = build_invocation(
        spec, config, RunPhase.FULL, args.threads, 1, Path(args.workdir) / "configs"
    )
    recorder = orch.PerfStackRecorder()
    text = recorder.record(invocation)
    profile = fg.ingest(fg.parse_perf_script(text))
    folded, svg = fg.write_outputs(
        profile, Path(args.out), orch._slug(spec.name), spec.display_name()
    )
    print(f"wrote {folded}\nwrote {svg}")
    for name, share in fg.top_functions(profile, 5):
        print(f"  {share:6.1%}  {name}")
    return 0


def cmd_predict(args) -> int:
    registry = _load_registry(args)
    at = _parse_at(args.at)
    batch_known = "batch=" in args.at.replace(" ", "")
    target = args.target
    if Path(target).exists():
        manifest = manifest_from_file(Path(target), registry.primitive_names())
    else:
        manifest = registry.get_manifest(target)
    store = ResultStore(Path(args.store))
    table, key = _cost_table_at(store, at["config"], at["threads"], batch_known)
    (prediction, seconds) = orch.time_predict(predict, manifest, table, key)
    store.persist([row_from_prediction(prediction, predict_seconds=seconds)])
    print(f"{manifest.benchmark} at N=2^{key[0].log2_ring_dim} L={key[0].depth} threads={key[1]}:")
    print(f"  predicted runtime: {prediction.total_time:.4f} s (model evaluated in {seconds:.3f} s)")
    if prediction.total_energy is not None:
        print(f"  predicted energy:  {prediction.total_energy:.2f} J")
    for name, share in breakdown(prediction):
        print(f"  {share:7.2%}  {name}")
    return 0


def cmd_validate(args) -> int:
    registry = _load_registry(args)
    at = _parse_at(args.at)
    batch_known = "batch=" in args.at.replace(" ", "")
    store = ResultStore(Path(args.store))
    manifest = registry.get_manifest(args.benchmark)
    table, key = _cost_table_at(store, at["config"], at["threads"], batch_known)
    prediction = predict(manifest, table, key)
    rows = store.load(
        "denoised",
        benchmark=args.benchmark,
        thread_count=key[1],
    )
    if not rows:
        print(f"no denoised measurement for {args.benchmark}; profile it first", file=sys.stderr)
        return 1
    measured = denoised_from_row(rows[-1])
    eps_time, eps_energy = validate(prediction, measured)
    store.persist([row_from_validation(args.benchmark, key, eps_time, eps_energy)])
    print(f"{args.benchmark}: time error {eps_time:+.2%}", end="")
    if eps_energy is not None:
        print(f", energy error {eps_energy:+.2%}", end="")
    print()
    return 0


def cmd_compare(args) -> int:
    registry = _load_registry(args)
    at = _parse_at(args.at)
    batch_known = "batch=" in args.at.replace(" ", "")
    store = ResultStore(Path(args.store))
    primitives = registry.primitive_names()
    manifest_a = manifest_from_file(Path(args.manifest_a), primitives)
    manifest_b = manifest_from_file(Path(args.manifest_b), primitives)
    table, key = _cost_table_at(store, at["config"], at["threads"], batch_known)
    key_b = key
    if args.at_b:
        at_b = _parse_at(args.at_b)
        _, key_b = _cost_table_at(store, at_b["config"], at_b["threads"], True)
    result = compare_algorithms(manifest_a, manifest_b, table, key, key_b)
    keys_note = "same key" if result.same_key else "per-manifest keys"
    print(
        f"{manifest_a.benchmark} vs {manifest_b.benchmark} ({keys_note}): "
        f"speedup {result.speedup:.2f}x",
        end="",
    )
    if result.energy_reduction is not None:
        print(f", energy reduction {result.energy_reduction:.2f}x", end="")
    print()
    return 0


def cmd_report(args) -> int:
    store = ResultStore(Path(args.store), create=False)
    print(orch.report(store, args.kind, Path(args.out) if args.out else None))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fheprof")
    parser.add_argument("--registry", help="registry data directory (default: built-in catalog)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="inspect the benchmark catalog")
    bench_sub = bench.add_subparsers(dest="action", required=True)
    bench_list = bench_sub.add_parser("list")
    bench_list.add_argument("--level", choices=["primitive", "microbenchmark", "workload"])
    bench_show = bench_sub.add_parser("show")
    bench_show.add_argument("name")
    bench.set_defaults(func=cmd_bench)

    sweep = sub.add_parser("sweep", help="generate or run a parameter sweep")
    sweep_sub = sweep.add_subparsers(dest="action", required=True)
    for action in ("plan", "run"):
        p = sweep_sub.add_parser(action)
        p.add_argument("specfile")
        if action == "run":
            p.add_argument("--store", default="results")
            p.add_argument("--workdir", default="work")
    sweep.set_defaults(func=cmd_sweep)

    profile = sub.add_parser("profile", help="measure one benchmark now")
    profile.add_argument("benchmark")
    profile.add_argument("--threads", type=int, default=1)
    profile.add_argument("--runs", type=int, default=orch.DEFAULT_RUNS_PER_POINT)
    profile.add_argument(
        "--events",
        nargs="*",
        default=None,
        metavar="EVENT",
        help="collect PMU events (no names means the default 13-event set)",
    )
    profile.add_argument("--store", default="results")
    profile.add_argument("--workdir", default="work")
    profile.set_defaults(func=cmd_profile)

    flame = sub.add_parser("flamegraph", help="record stacks and render a flamegraph")
    flame.add_argument("benchmark")
    flame.add_argument("--threads", type=int, default=1)
    flame.add_argument("--workdir", default="work")
    flame.add_argument("--out", default="flamegraphs")
    flame.set_defaults(func=cmd_flamegraph)

    pred = sub.add_parser("predict", help="predict runtime/energy from primitive costs")
    pred.add_argument("target", help="benchmark name or manifest file path")
    pred.add_argument("--at", required=True, help="N=16,L=10[,batch=4096,std=none,threads=8]")
    pred.add_argument("--store", default="results")
    pred.set_defaults(func=cmd_predict)

    val = sub.add_parser("validate", help="compare a prediction against measurement")
    val.add_argument("benchmark")
    val.add_argument("--at", required=True)
    val.add_argument("--store", default="results")
    val.set_defaults(func=cmd_validate)

    comp = sub.add_parser("compare", help="what-if comparison of two manifests")
    comp.add_argument("manifest_a")
    comp.add_argument("manifest_b")
    comp.add_argument("--at", required=True)
    comp.add_argument("--at-b", help="separate key for manifest B (e.g. different depth)")
    comp.add_argument("--store", default="results")
    comp.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="render tables from the results store")
    rep.add_argument("kind", choices=["overhead", "prediction-speedup", "series"])
    rep.add_argument("--store", default="results")
    rep.add_argument("--out", help="output directory for series files")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (FheprofError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
