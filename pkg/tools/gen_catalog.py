#!/usr/bin/env python3
"""One-shot generator for the built-in benchmark catalog YAML files."""

from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "fheprof" / "data"

PRIMITIVES = [
    # (name, filename slug, per-call estimate seconds)
    ("EvalAdd", "evaladd", 0.002),
    ("EvalAdd(Plaintext)", "evaladd-plaintext", 0.002),
    ("EvalSub", "evalsub", 0.002),
    ("EvalSub(Scalar)", "evalsub-scalar", 0.002),
    ("EvalMult", "evalmult", 0.03),
    ("EvalMultNoRelin", "evalmultnorelin", 0.02),
    ("EvalMult(Plaintext)", "evalmult-plaintext", 0.005),
    ("EvalMult(Scalar)", "evalmult-scalar", 0.005),
    ("EvalSquare", "evalsquare", 0.025),
    ("EvalRotate", "evalrotate", 0.03),
    ("EvalFastRotate", "evalfastrotate", 0.02),
    ("EvalBootstrap", "evalbootstrap", 5.0),
    ("EvalChebyshevFunction", "evalchebyshevfunction", 2.0),
    ("EvalChebyshevSeries", "evalchebyshevseries", 1.5),
]

DEFAULTS = {
    "primitive": dict(log2_ring_dim=16, depth=10, batch_size=4096, security_standard="none"),
    "micro": dict(log2_ring_dim=16, depth=10, batch_size=4096, security_standard="none"),
}

MANIFESTS = {
    "matrix-mult-32": {
        "EvalAdd": 178,
        "EvalMult": 16,
        "EvalMult(Plaintext)": 32,
        "EvalRotate": 193,
    },
    "logistic-function": {
        "EvalAdd": 70,
        "EvalSub": 85,
        "EvalSub(Scalar)": 31,
        "EvalMult": 116,
        "EvalMult(Scalar)": 67,
        "EvalSquare": 8,
        "EvalChebyshevSeries": 1,
    },
    "sign-eval": {
        "EvalAdd": 519,
        "EvalSub": 310,
        "EvalSub(Scalar)": 256,
        "EvalMult": 568,
        "EvalMult(Scalar)": 61,
        "EvalChebyshevSeries": 1,
    },
    "cifar10": {
        "EvalAdd": 47,
        "EvalAdd(Plaintext)": 2,
        "EvalSub": 3,
        "EvalSub(Scalar)": 4,
        "EvalMult": 7,
        "EvalMult(Plaintext)": 33,
        "EvalRotate": 33,
    },
    "resnet20": {
        "EvalAdd": 6845,
        "EvalAdd(Plaintext)": 24,
        "EvalMult": 219,
        "EvalMult(Plaintext)": 6475,
        "EvalRotate": 1218,
        "EvalFastRotate": 152,
        "EvalBootstrap": 21,
        "EvalChebyshevFunction": 12,
    },
    "logreg": {
        "EvalAdd": 39,
        "EvalSub": 19,
        "EvalMult": 9,
        "EvalMult(Plaintext)": 40,
        "EvalRotate": 20,
        "EvalBootstrap": 9,
    },
    "chi-square": {
        "EvalAdd": 598,
        "EvalSub": 7,
        "EvalMultNoRelin": 207,
        "EvalMult(Plaintext)": 4,
        "EvalMult(Scalar)": 3,
    },
}

MICRO = [
    ("matrix-mult-32", "Matrix Multiplication", {"matrix_size": 32}),
    ("matrix-mult-64", "Matrix Multiplication (64)", {"matrix_size": 64}),
    ("logistic-function", "Logistic Function", {}),
    ("sign-eval", "Sign Evaluation Function", {}),
]

WORKLOADS = [
    ("cifar10", "CIFAR-10", dict(log2_ring_dim=16, depth=5, batch_size=4096, security_standard="none")),
    ("resnet20", "ResNet-20", dict(log2_ring_dim=16, depth=10, batch_size=16384, security_standard="none")),
    ("logreg", "Logistic Regression", dict(log2_ring_dim=17, depth=14, batch_size=65536, security_standard="128-bit")),
    ("chi-square", "Chi Square Test", dict(log2_ring_dim=17, depth=3, batch_size=1, security_standard="none")),
]


def dump(path: Path, doc: dict) -> None:
    path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=False))


def main() -> None:
    bench_dir = OUT / "benchmarks"
    bench_dir.mkdir(parents=True, exist_ok=True)

    for name, slug, est in PRIMITIVES:
        dump(
            bench_dir / f"{slug}.yaml",
            {
                "name": name,
                "level": "primitive",
                "runner": "fhe-adapter",
                "default_config": DEFAULTS["primitive"],
                "extra_params": {"per_call_estimate_s": est},
            },
        )

    for name, title, extra in MICRO:
        doc = {
            "name": name,
            "title": title,
            "level": "microbenchmark",
            "runner": "fhe-adapter",
            "default_config": DEFAULTS["micro"],
            "extra_params": extra,
        }
        if name in MANIFESTS:
            doc["manifest"] = MANIFESTS[name]
        dump(bench_dir / f"{name}.yaml", doc)

    for name, title, cfg in WORKLOADS:
        doc = {
            "name": name,
            "title": title,
            "level": "workload",
            "runner": None,
            "default_config": cfg,
            "manifest": MANIFESTS[name],
        }
        dump(bench_dir / f"{name}.yaml", doc)

    security = {
        "128-bit": {13: 3, 14: 7, 15: 16, 16: 34, 17: 69},
        "192-bit": {13: 1, 14: 4, 15: 11, 16: 23, 17: 47},
        "256-bit": {13: 1, 14: 3, 15: 8, 16: 17, 17: 36},
    }
    header = (
        "# Depth caps per security standard and log2 ring dimension.\n"
        "# Derived from the HE security standard's max-log-Q tables (ternary\n"
        "# secret, classical) assuming a 50-bit scaling modulus and a 60-bit\n"
        "# first modulus; 2^16/2^17 rows follow the usual doubling of max log Q.\n"
        "# Editable data: adjust when targeting a different modulus layout.\n"
    )
    (OUT / "security_standards.yaml").write_text(
        header + yaml.safe_dump(security, sort_keys=True)
    )
    print(f"wrote catalog under {OUT}")


if __name__ == "__main__":
    main()
