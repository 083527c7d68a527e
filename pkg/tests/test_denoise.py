from __future__ import annotations

import logging
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_record
from fheprof.denoise import denoise, derive, per_call, setup_overhead_pct
from fheprof.profiler import aggregate_median
from fheprof.protocol import RunPhase, build_invocation


def pair(full_wall, setup_wall, full_energy=None, setup_energy=None,
         full_events=None, setup_events=None):
    full = make_record(full_wall, full_energy, full_events, phase=RunPhase.FULL)
    setup = make_record(setup_wall, setup_energy, setup_events, phase=RunPhase.SETUP)
    return full, setup


class TestDenoise:
    def test_matrix_mult_overhead_row(self):
        # 10.20 s full, 0.04 s setup: ROI 10.16 s, setup overhead 0.39 %.
        metrics = denoise(*pair(10.20, 0.04))
        assert metrics.roi_time == pytest.approx(10.16, abs=1e-12)
        assert f"{setup_overhead_pct(metrics.roi_time, 0.04):.2f}" == "0.39"

    def test_logistic_func_overhead_row(self):
        metrics = denoise(*pair(6.72, 0.04))
        assert metrics.roi_time == pytest.approx(6.68, abs=1e-12)
        assert f"{setup_overhead_pct(metrics.roi_time, 0.04):.2f}" == "0.60"

    def test_negative_roi_clamps_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = denoise(*pair(0.010, 0.011))
        assert metrics.roi_time == 0.0
        assert any("negative ROI" in r.message for r in caplog.records)

    def test_energy_subtraction(self):
        metrics = denoise(*pair(10.0, 1.0, full_energy=55.0, setup_energy=5.0))
        assert metrics.roi_energy == pytest.approx(50.0)

    def test_energy_in_one_phase_only_dropped(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = denoise(*pair(10.0, 1.0, full_energy=55.0))
        assert metrics.roi_energy is None
        assert any("only one phase" in r.message for r in caplog.records)

    def test_shared_events_subtracted_others_dropped(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = denoise(
                *pair(
                    10.0,
                    1.0,
                    full_events={"instructions": 1000, "cpu-cycles": 500},
                    setup_events={"instructions": 100, "page-faults": 3},
                )
            )
        assert metrics.roi_events == {"instructions": 900}
        assert any("only one phase" in r.message for r in caplog.records)

    def test_negative_event_delta_clamps_individually(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = denoise(
                *pair(
                    10.0,
                    1.0,
                    full_events={"page-faults": 5, "instructions": 100},
                    setup_events={"page-faults": 9, "instructions": 10},
                )
            )
        assert metrics.roi_events == {"instructions": 90, "page-faults": 0}

    def test_heterogeneous_inputs_rejected(self):
        full, setup = pair(10.0, 1.0)
        with pytest.raises(ValueError):
            denoise(full, replace(setup, thread_count=8))

    def test_phase_order_enforced(self):
        full, setup = pair(10.0, 1.0)
        with pytest.raises(ValueError):
            denoise(setup, full)

    def test_zero_record_is_identity(self):
        full, setup = pair(
            7.25, 0.0, full_energy=12.5, setup_energy=0.0,
            full_events={"instructions": 42}, setup_events={"instructions": 0},
        )
        metrics = denoise(full, setup)
        assert metrics.roi_time == 7.25
        assert metrics.roi_energy == 12.5
        assert metrics.roi_events == {"instructions": 42}

    @settings(max_examples=50)
    @given(
        full=st.floats(1.0, 100.0),
        setup=st.floats(0.0, 0.5),
        offset=st.floats(0.0, 50.0),
    )
    def test_linearity_under_constant_offset(self, full, setup, offset):
        base = denoise(*pair(full, setup, full_energy=2 * full, setup_energy=setup))
        shifted = denoise(
            *pair(
                full + offset,
                setup + offset,
                full_energy=2 * full + offset,
                setup_energy=setup + offset,
            )
        )
        assert shifted.roi_time == pytest.approx(base.roi_time, rel=1e-12, abs=1e-9)
        assert shifted.roi_energy == pytest.approx(base.roi_energy, rel=1e-12, abs=1e-9)


class TestDerive:
    def test_power_definition(self):
        metrics = derive(denoise(*pair(11.0, 1.0, full_energy=51.0, setup_energy=1.0)))
        assert metrics.avg_power == pytest.approx(5.0)

    def test_ipc_definition(self):
        metrics = derive(
            denoise(
                *pair(
                    10.0,
                    1.0,
                    full_events={"instructions": 2_000_000_000, "cpu-cycles": 1_000_000_000},
                    setup_events={"instructions": 0, "cpu-cycles": 0},
                )
            )
        )
        assert metrics.ipc == pytest.approx(2.0)

    def test_zero_cycles_flagged(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = derive(
                denoise(
                    *pair(
                        10.0,
                        1.0,
                        full_events={"instructions": 10, "cpu-cycles": 3},
                        setup_events={"instructions": 5, "cpu-cycles": 3},
                    )
                )
            )
        assert metrics.ipc is None
        assert any("degenerate" in r.message for r in caplog.records)

    def test_zero_roi_time_power_absent(self, caplog):
        with caplog.at_level(logging.WARNING):
            metrics = derive(denoise(*pair(1.0, 1.0, full_energy=5.0, setup_energy=1.0)))
        assert metrics.avg_power is None
        assert any("average power" in r.message for r in caplog.records)

    def test_ipc_requires_both_counters(self):
        metrics = derive(
            denoise(
                *pair(
                    10.0, 1.0,
                    full_events={"instructions": 100},
                    setup_events={"instructions": 10},
                )
            )
        )
        assert metrics.ipc is None


class TestPerCall:
    def test_division(self):
        metrics = per_call(denoise(*pair(0.54, 0.04)), 250)
        assert metrics.per_call_time == pytest.approx(0.002)
        assert metrics.calls == 250

    def test_single_call_identity(self):
        base = denoise(*pair(0.54, 0.04))
        metrics = per_call(base, 1)
        assert metrics.per_call_time == base.roi_time

    def test_events_divided_real_valued(self):
        base = denoise(
            *pair(10.0, 1.0, full_events={"instructions": 5}, setup_events={"instructions": 0})
        )
        metrics = per_call(base, 2)
        assert metrics.per_call_events == {"instructions": 2.5}

    def test_invalid_calls(self):
        with pytest.raises(ValueError):
            per_call(denoise(*pair(1.0, 0.1)), 0)


class TestSyntheticSetupInjection:
    def test_injected_setup_cost_recovered(self, tmp_path, fake_energy_profiler):
        from fheprof.synthetic import SyntheticCostModel, synthetic_registry

        # Setup cost large enough that interpreter startup stays inside the
        # 10% recovery budget.
        model = SyntheticCostModel(base_costs={"EvalMult": 0.004}, setup_cost=2.0)
        registry = synthetic_registry(model)
        spec = registry.get("EvalMult")
        config = registry.resolve_config(spec, {})
        reps = 125
        records = {}
        for phase in (RunPhase.SETUP, RunPhase.FULL):
            invocation = build_invocation(
                spec, config, phase, 1, reps, tmp_path / "configs"
            )
            records[phase] = fake_energy_profiler.measure(
                invocation, runs=1, config=config
            )
        med_setup = aggregate_median(records[RunPhase.SETUP])
        med_full = aggregate_median(records[RunPhase.FULL])
        assert abs(med_setup.wall_time - model.setup_cost) / model.setup_cost <= 0.10
        metrics = denoise(med_full, med_setup)
        expected = reps * model.per_call_seconds("EvalMult", config, 1)
        assert metrics.roi_time == pytest.approx(expected, rel=0.10)
        assert metrics.roi_energy is not None and metrics.roi_energy > 0
