from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from fheprof.denoise import DenoisedMetrics
from fheprof.errors import CoverageError
from fheprof.model import (
    PrimitiveCost,
    PrimitiveCostTable,
    aggregate_geomean,
    breakdown,
    compare_algorithms,
    cosine_similarity,
    predict,
    validate,
)
from fheprof.registry import CryptoConfig, OpCountManifest

CONFIG = CryptoConfig(16, 10, 4096)
KEY = (CONFIG, 1)

PRIMS = ["EvalAdd", "EvalMult", "EvalRotate", "EvalSub", "EvalBootstrap"]


def table_from(costs: dict[str, tuple[float, float | None]]) -> PrimitiveCostTable:
    table = PrimitiveCostTable()
    for name, (t, e) in costs.items():
        table.add(CONFIG, 1, name, t, e)
    return table


def brute_force_totals(counts, costs):
    """Independent oracle: plain accumulation loop over the manifest."""
    total_t = 0.0
    total_e = 0.0
    for name, count in counts.items():
        if count > 0:
            t, e = costs[name]
            total_t += count * t
            total_e += count * (e or 0.0)
    return total_t, total_e


def random_case(rng: random.Random):
    counts = {p: rng.randint(0, 500) for p in PRIMS}
    costs = {
        p: (rng.uniform(1e-5, 2.0), rng.uniform(1e-3, 50.0)) for p in PRIMS
    }
    return counts, costs


class TestPredict:
    def test_hand_sum_example(self):
        manifest = OpCountManifest("toy", {"EvalAdd": 2, "EvalMult": 3})
        table = table_from({"EvalAdd": (0.001, 0.01), "EvalMult": (0.010, 0.20)})
        prediction = predict(manifest, table, KEY)
        assert prediction.total_time == pytest.approx(0.032, rel=1e-12)
        assert prediction.total_energy == pytest.approx(0.62, rel=1e-12)

    def test_empty_manifest(self):
        prediction = predict(OpCountManifest("empty", {}), table_from({}), KEY)
        assert prediction.total_time == 0.0
        assert prediction.total_energy == 0.0
        assert prediction.contributions == {}

    def test_zero_counts_omitted(self):
        manifest = OpCountManifest("toy", {"EvalAdd": 0, "EvalMult": 1})
        table = table_from({"EvalMult": (0.01, None)})
        prediction = predict(manifest, table, KEY)
        assert list(prediction.contributions) == ["EvalMult"]
        assert prediction.contributions["EvalMult"].time_share == pytest.approx(1.0)

    def test_missing_entry_is_coverage_error(self):
        manifest = OpCountManifest("toy", {"EvalMult": 1})
        with pytest.raises(CoverageError, match="EvalMult"):
            predict(manifest, table_from({"EvalAdd": (0.001, None)}), KEY)

    def test_incomplete_energy_leaves_energy_absent(self):
        manifest = OpCountManifest("toy", {"EvalAdd": 1, "EvalMult": 1})
        table = table_from({"EvalAdd": (0.001, 0.5), "EvalMult": (0.01, None)})
        prediction = predict(manifest, table, KEY)
        assert prediction.total_energy is None

    def test_random_against_brute_force(self):
        rng = random.Random(7)
        for _ in range(50):
            counts, costs = random_case(rng)
            manifest = OpCountManifest("rand", counts)
            prediction = predict(manifest, table_from(costs), KEY)
            expect_t, expect_e = brute_force_totals(counts, costs)
            assert prediction.total_time == pytest.approx(expect_t, rel=1e-12)
            assert prediction.total_energy == pytest.approx(expect_e, rel=1e-12)

    def test_shares_sum_to_one(self):
        rng = random.Random(11)
        counts, costs = random_case(rng)
        counts["EvalAdd"] = max(counts["EvalAdd"], 1)
        prediction = predict(OpCountManifest("rand", counts), table_from(costs), KEY)
        total = math.fsum(c.time_share for c in prediction.contributions.values())
        assert total == pytest.approx(1.0, abs=1e-9)

    @given(k=st.integers(min_value=0, max_value=7))
    @settings(max_examples=20)
    def test_homogeneity(self, k):
        counts = {"EvalAdd": 3, "EvalMult": 5}
        costs = {"EvalAdd": (0.002, 0.1), "EvalMult": (0.03, 0.9)}
        base = predict(OpCountManifest("m", counts), table_from(costs), KEY)
        scaled = predict(
            OpCountManifest("m", {n: c * k for n, c in counts.items()}),
            table_from(costs),
            KEY,
        )
        assert scaled.total_time == pytest.approx(k * base.total_time, rel=1e-12)
        if k > 0:
            for name in counts:
                assert scaled.contributions[name].time_share == pytest.approx(
                    base.contributions[name].time_share, rel=1e-12
                )

    def test_additivity(self):
        costs = {p: (0.001 * (i + 1), 0.01 * (i + 1)) for i, p in enumerate(PRIMS)}
        rng = random.Random(3)
        m1 = {p: rng.randint(0, 50) for p in PRIMS}
        m2 = {p: rng.randint(0, 50) for p in PRIMS}
        union = {p: m1[p] + m2[p] for p in PRIMS}
        table = table_from(costs)
        p1 = predict(OpCountManifest("a", m1), table, KEY)
        p2 = predict(OpCountManifest("b", m2), table, KEY)
        pu = predict(OpCountManifest("u", union), table, KEY)
        assert pu.total_time == pytest.approx(p1.total_time + p2.total_time, rel=1e-12)
        assert pu.total_energy == pytest.approx(
            p1.total_energy + p2.total_energy, rel=1e-12
        )

    def test_argmax_stable_under_uniform_scaling(self):
        counts = {"EvalAdd": 100, "EvalMult": 30, "EvalRotate": 10}
        costs = {"EvalAdd": (0.002, 1.0), "EvalMult": (0.03, 1.0), "EvalRotate": (0.025, 1.0)}
        scaled = {p: (t * 37.5, e * 37.5) for p, (t, e) in costs.items()}
        a = breakdown(predict(OpCountManifest("m", counts), table_from(costs), KEY))
        b = breakdown(predict(OpCountManifest("m", counts), table_from(scaled), KEY))
        assert a[0][0] == b[0][0]
        assert a[0][1] == pytest.approx(b[0][1], rel=1e-12)


class TestBreakdown:
    def test_hand_example(self):
        manifest = OpCountManifest("toy", {"EvalAdd": 2, "EvalMult": 3})
        table = table_from({"EvalAdd": (0.001, None), "EvalMult": (0.010, None)})
        ranked = breakdown(predict(manifest, table, KEY))
        assert ranked[0] == ("EvalMult", pytest.approx(0.9375, rel=1e-12))
        assert ranked[1] == ("EvalAdd", pytest.approx(0.0625, rel=1e-12))

    def test_singleton_share(self):
        manifest = OpCountManifest("toy", {"EvalMult": 5})
        ranked = breakdown(predict(manifest, table_from({"EvalMult": (0.01, None)}), KEY))
        assert ranked == [("EvalMult", pytest.approx(1.0))]

    def test_shares_renormalized_exactly(self):
        rng = random.Random(23)
        for _ in range(20):
            counts, costs = random_case(rng)
            counts["EvalAdd"] = max(counts["EvalAdd"], 1)
            ranked = breakdown(
                predict(OpCountManifest("r", counts), table_from(costs), KEY)
            )
            assert math.fsum(share for _, share in ranked) == pytest.approx(1.0, abs=1e-9)
            assert [s for _, s in ranked] == sorted(
                (s for _, s in ranked), reverse=True
            )

    def test_zero_total_rejected(self):
        prediction = predict(OpCountManifest("empty", {}), table_from({}), KEY)
        with pytest.raises(ValueError):
            breakdown(prediction)


def measured(roi_time: float, roi_energy: float | None = None) -> DenoisedMetrics:
    return DenoisedMetrics(
        benchmark="m", config=CONFIG, thread_count=1, roi_time=roi_time, roi_energy=roi_energy
    )


class TestValidate:
    def test_ten_percent_underestimate(self):
        manifest = OpCountManifest("m", {"EvalAdd": 9})
        table = table_from({"EvalAdd": (1.0, None)})
        prediction = predict(manifest, table, KEY)
        eps_time, eps_energy = validate(prediction, measured(10.0))
        assert eps_time == pytest.approx(-0.10)
        assert eps_energy is None

    def test_exact_prediction(self):
        manifest = OpCountManifest("m", {"EvalAdd": 10})
        table = table_from({"EvalAdd": (1.0, 2.0)})
        prediction = predict(manifest, table, KEY)
        eps_time, eps_energy = validate(prediction, measured(10.0, 20.0))
        assert eps_time == pytest.approx(0.0)
        assert eps_energy == pytest.approx(0.0)

    def test_zero_measured_time_rejected(self):
        prediction = predict(
            OpCountManifest("m", {"EvalAdd": 1}), table_from({"EvalAdd": (1.0, None)}), KEY
        )
        with pytest.raises(ValueError):
            validate(prediction, measured(0.0))


class TestAggregateGeomean:
    def test_constant_list(self):
        assert aggregate_geomean([0.10, 0.10]) == pytest.approx(0.10, rel=1e-12)

    def test_closed_form_root(self):
        # sqrt(1.21 * 1.00) = 1.1
        assert aggregate_geomean([0.21, 0.0]) == pytest.approx(0.10, rel=1e-12)

    def test_reciprocal_symmetry(self):
        assert aggregate_geomean([-0.5, 1.0]) == pytest.approx(0.0, abs=1e-12)

    def test_sign_preserved_for_underestimates(self):
        assert aggregate_geomean([-0.1, -0.05]) < 0

    def test_nonpositive_ratio_rejected(self):
        with pytest.raises(ValueError):
            aggregate_geomean([-1.0])
        with pytest.raises(ValueError):
            aggregate_geomean([-1.5])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_geomean([])

    def test_singleton_identity(self):
        assert aggregate_geomean([0.37]) == pytest.approx(0.37, rel=1e-12)

    @given(st.lists(st.floats(-0.9, 9.0), min_size=1, max_size=20))
    @settings(max_examples=50)
    def test_permutation_invariance(self, errors):
        shuffled = list(errors)
        random.Random(0).shuffle(shuffled)
        assert aggregate_geomean(shuffled) == pytest.approx(
            aggregate_geomean(errors), rel=1e-9, abs=1e-12
        )

    def test_against_product_oracle(self):
        rng = random.Random(5)
        for _ in range(100):
            errors = [rng.uniform(-0.6, 1.5) for _ in range(rng.randint(1, 12))]
            product = 1.0
            for e in errors:
                product *= 1.0 + e
            expected = product ** (1.0 / len(errors)) - 1.0
            assert aggregate_geomean(errors) == pytest.approx(expected, rel=1e-12, abs=1e-13)


class TestCosineSimilarity:
    def test_identical_vectors(self):
        assert cosine_similarity([0.3, 0.5, 0.2], [0.3, 0.5, 0.2]) == pytest.approx(1.0)

    def test_orthogonal_vectors(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_brute_force_oracle(self):
        rng = random.Random(13)
        for _ in range(100):
            n = rng.randint(1, 10)
            a = [rng.uniform(-1, 1) for _ in range(n)]
            b = [rng.uniform(-1, 1) for _ in range(n)]
            if all(x == 0 for x in a) or all(x == 0 for x in b):
                continue
            dot = sum(x * y for x, y in zip(a, b))
            norm = math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b))
            assert cosine_similarity(a, b) == pytest.approx(dot / norm, rel=1e-12, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity([1.0], [1.0, 2.0])

    def test_range(self):
        assert cosine_similarity([1.0, 2.0], [-1.0, -2.0]) == pytest.approx(-1.0)


class TestCompareAlgorithms:
    def test_scaled_manifest_speedup(self):
        costs = {"EvalAdd": (0.002, 0.1), "EvalMult": (0.03, 0.5)}
        base = {"EvalAdd": 10, "EvalMult": 5}
        table = table_from(costs)
        a = OpCountManifest("a", {n: 10 * c for n, c in base.items()})
        b = OpCountManifest("b", base)
        result = compare_algorithms(a, b, table, KEY)
        assert result.speedup == pytest.approx(10.0, rel=1e-12)
        assert result.energy_reduction == pytest.approx(10.0, rel=1e-12)
        assert result.same_key

    def test_identical_manifests(self):
        table = table_from({"EvalAdd": (0.002, None)})
        m = OpCountManifest("m", {"EvalAdd": 3})
        assert compare_algorithms(m, m, table, KEY).speedup == pytest.approx(1.0)

    def test_reciprocal_property(self):
        rng = random.Random(17)
        costs = {p: (rng.uniform(1e-4, 0.1), rng.uniform(0.01, 2.0)) for p in PRIMS}
        table = table_from(costs)
        ma = OpCountManifest("a", {p: rng.randint(1, 100) for p in PRIMS})
        mb = OpCountManifest("b", {p: rng.randint(1, 100) for p in PRIMS})
        ab = compare_algorithms(ma, mb, table, KEY)
        ba = compare_algorithms(mb, ma, table, KEY)
        assert ab.speedup * ba.speedup == pytest.approx(1.0, rel=1e-12)
        assert ab.energy_reduction * ba.energy_reduction == pytest.approx(1.0, rel=1e-12)

    def test_hand_computed_sums(self):
        table = table_from({"EvalAdd": (0.002, 0.04), "EvalRotate": (0.01, 0.3)})
        ma = OpCountManifest("a", {"EvalAdd": 100, "EvalRotate": 20})
        mb = OpCountManifest("b", {"EvalAdd": 40})
        result = compare_algorithms(ma, mb, table, KEY)
        assert result.speedup == pytest.approx((0.2 + 0.2) / 0.08, rel=1e-12)
        assert result.energy_reduction == pytest.approx((4.0 + 6.0) / 1.6, rel=1e-12)

    def test_per_manifest_keys_recorded(self):
        other_config = CryptoConfig(16, 3, 4096)
        table = table_from({"EvalAdd": (0.002, None)})
        table.add(other_config, 1, "EvalAdd", 0.001)
        m = OpCountManifest("m", {"EvalAdd": 10})
        result = compare_algorithms(m, m, table, KEY, key_b=(other_config, 1))
        assert not result.same_key
        assert result.speedup == pytest.approx(2.0, rel=1e-12)

    def test_empty_manifest_rejected(self):
        table = table_from({"EvalAdd": (0.002, None)})
        with pytest.raises(ValueError):
            compare_algorithms(
                OpCountManifest("a", {}), OpCountManifest("b", {"EvalAdd": 1}), table, KEY
            )


class TestValidationReport:
    def build(self):
        from fheprof.model import ValidationEntry, ValidationReport
        from fheprof.registry import AbstractionLevel

        return ValidationReport(
            entries=[
                ValidationEntry("matrix-mult-32", AbstractionLevel.MICROBENCHMARK, -0.10, -0.12, 0.99),
                ValidationEntry("sign-eval", AbstractionLevel.MICROBENCHMARK, -0.04, None, 0.97),
                ValidationEntry("resnet20", AbstractionLevel.WORKLOAD, 0.21, 0.30, 0.92),
            ]
        )

    def test_per_level_geomean(self):
        from fheprof.registry import AbstractionLevel

        report = self.build()
        expected = (0.90 * 0.96) ** 0.5 - 1.0
        assert report.geomean(AbstractionLevel.MICROBENCHMARK) == pytest.approx(
            expected, rel=1e-12
        )
        assert report.geomean(AbstractionLevel.WORKLOAD) == pytest.approx(0.21, rel=1e-12)

    def test_render_states_geomean_definition(self):
        text = self.build().render_table()
        assert "matrix-mult-32" in text
        assert "-10.00%" in text
        assert "geomean" in text and "(prod(1 + err_i))^(1/n) - 1" in text


class TestCostTable:
    def test_cost_validation(self):
        with pytest.raises(ValueError):
            PrimitiveCost(0.0)
        with pytest.raises(ValueError):
            PrimitiveCost(0.1, energy=0.0)

    def test_from_denoised_uses_per_call_fields(self):
        metrics = DenoisedMetrics(
            benchmark="EvalAdd",
            config=CONFIG,
            thread_count=1,
            roi_time=0.5,
            roi_energy=10.0,
            per_call_time=0.002,
            per_call_energy=0.04,
            calls=250,
        )
        table = PrimitiveCostTable.from_denoised([metrics])
        cost = table.lookup("EvalAdd", KEY)
        assert cost.time == pytest.approx(0.002)
        assert cost.energy == pytest.approx(0.04)

    def test_lookup_missing_key(self):
        table = PrimitiveCostTable()
        with pytest.raises(CoverageError):
            table.lookup("EvalAdd", KEY)
