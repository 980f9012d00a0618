"""Tests for the training/evaluation harness around the simulator."""

from dataclasses import replace

import numpy as np
import pytest

from ndrsim import decision_rule as dr
from ndrsim import harness
from ndrsim.microsim import SimConfig, TripRecord

SHORT = SimConfig(horizon=900.0)


def trip(depart, arrive, free_flow=20.0):
    return TripRecord(vehicle_id=0, vehicle_class="car", depart_s=depart,
                      arrive_s=arrive, free_flow_s=free_flow,
                      route_length_m=200.0)


class TestKpiDelay:
    def test_mean_over_completed_trips(self):
        delay, flag = harness.kpi_delay([trip(0.0, 30.0), trip(0.0, 50.0)])
        assert delay == pytest.approx((10.0 + 30.0) / 2)
        assert not flag

    def test_floored_at_zero_per_trip(self):
        delay, _ = harness.kpi_delay([trip(0.0, 15.0), trip(0.0, 40.0)])
        assert delay == pytest.approx(10.0)

    def test_unfinished_excluded(self):
        delay, _ = harness.kpi_delay([trip(0.0, 30.0), trip(0.0, None)])
        assert delay == pytest.approx(10.0)

    def test_empty_set_flagged(self):
        delay, flag = harness.kpi_delay([trip(0.0, None)])
        assert delay == 0.0 and flag


class TestObjectiveSpec:
    def kpi(self, delay=100.0, co2=10.0, bc=2.0):
        return harness.KpiRecord(
            mean_delay_s=delay, throughput=50, departures=60, carbon_kg=3.0,
            co2_kg=co2, pm_g=5.0, bc_g=bc, queue_by_link={},
            junction_emissions={}, unfinished=10, gridlock=False,
            no_trips=False)

    def test_delay_only(self):
        obj = harness.ObjectiveSpec(mode="delay", n1=50.0)
        assert obj.scalar(self.kpi()) == pytest.approx(2.0)

    def test_weighted_co2_term(self):
        obj = harness.ObjectiveSpec(mode="delay+co2", w2=2.0, n1=100.0,
                                    n2=10.0)
        assert obj.scalar(self.kpi()) == pytest.approx(1.0 + 2.0)

    def test_weighted_bc_term(self):
        obj = harness.ObjectiveSpec(mode="delay+bc", n1=100.0, n3=4.0)
        assert obj.scalar(self.kpi()) == pytest.approx(1.0 + 0.5)

    def test_zero_weight_drops_term(self):
        obj = harness.ObjectiveSpec(mode="delay+co2", w2=0.0, n1=100.0)
        assert obj.scalar(self.kpi()) == pytest.approx(1.0)

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            harness.ObjectiveSpec(mode="co2")

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            harness.ObjectiveSpec(w2=-1.0)

    def test_non_positive_normalizer_rejected(self):
        with pytest.raises(ValueError):
            harness.ObjectiveSpec(n1=0.0)


class TestController:
    def test_template_matches_scope(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor)
        params = harness.params_template(spec)
        assert params.n_sensors == 4
        assert params.n_phases == 4
        assert params.x.size == dr.param_count(
            dr.FFNN, (16, 8), 4, spec.window, 4)

    def test_greens_feasible_at_every_epoch(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor)
        rng = np.random.default_rng(0)
        params = harness.params_template(spec)
        params = params.with_vector(rng.normal(size=params.x.size))
        controller = harness.make_controller(corridor, params)

        class FakeLog:
            counts = [[12, 30, 4, 9, 2]] * 4

        for t in (600.0, 1200.0):
            out = controller(t, FakeLog)
            assert set(out) == {"A", "B"}
            for jid, greens in out.items():
                plan = corridor.network.signal_plans[jid]
                g = np.asarray(greens)
                assert np.all(g >= [p.g_min for p in plan.phases])
                assert np.all(g <= [p.g_max for p in plan.phases])
                assert g.sum() == pytest.approx(plan.budget, abs=1e-9)

    def test_sensor_count_mismatch_rejected(self, corridor, corridor_alt):
        spec = harness.TrainingSpec(scenario=corridor)
        params = harness.params_template(spec)
        with pytest.raises(ValueError, match="sensors"):
            harness.make_controller(corridor_alt, params)


class TestRunMany:
    def test_baseline_run_is_deterministic(self, corridor):
        a = harness.run_one(corridor, None, 1, SHORT)
        b = harness.run_one(corridor, None, 1, SHORT)
        assert a == b

    def test_midpoint_rule_differs_from_baseline(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor)
        params = harness.params_template(spec)
        base = harness.run_one(corridor, None, 1, None)
        mid = harness.run_one(corridor, params, 1, None)
        assert mid.mean_delay_s != base.mean_delay_s

    def test_workers_preserve_order_and_values(self, corridor):
        jobs = [(corridor, None, None, s, SHORT) for s in (1, 2, 3)]
        serial = harness.run_many(jobs, workers=0)
        pooled = harness.run_many(jobs, workers=2)
        assert serial == pooled

    def test_default_normalizers_use_baseline_means(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor, training_seeds=(1, 2),
                                    sim_config=SHORT)
        obj = harness.default_normalizers(spec, harness.ObjectiveSpec())
        kpis = [harness.run_one(corridor, None, s, SHORT) for s in (1, 2)]
        assert obj.n1 == pytest.approx(
            np.mean([k.mean_delay_s for k in kpis]))
        assert obj.n2 == pytest.approx(np.mean([k.co2_kg for k in kpis]))


class TestEvaluation:
    def test_paired_report_structure(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor)
        params = harness.params_template(spec)
        rep = harness.evaluate_online(params, corridor, [1, 2, 3],
                                      sim_config=SHORT)
        assert rep.seeds == [1, 2, 3]
        assert len(rep.candidate) == len(rep.baseline) == 3
        for k in harness._KPI_SCALARS:
            assert rep.delta[k] == pytest.approx(
                rep.baseline_mean[k] - rep.candidate_mean[k])
        assert rep.delay_co2_r is None or -1.0 <= rep.delay_co2_r <= 1.0

    def test_no_seeds_rejected(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor)
        params = harness.params_template(spec)
        with pytest.raises(ValueError):
            harness.evaluate_online(params, corridor, [])

    def test_demand_sweep_relative_columns(self, corridor):
        rows = harness.demand_sweep(None, corridor, [1.0, 1.2], [1],
                                    sim_config=SHORT)
        assert [r["factor"] for r in rows] == [1.0, 1.2]
        base = rows[0]
        assert base["mean_delay_s_rel"] == pytest.approx(1.0)
        assert rows[1]["departures_rel"] == pytest.approx(
            rows[1]["departures"] / base["departures"])

    def test_sweep_leaves_scenario_unscaled(self, corridor):
        before = corridor.demand.scale_factor
        harness.demand_sweep(None, corridor, [1.5], [1], sim_config=SHORT)
        assert corridor.demand.scale_factor == before


class TestTraining:
    def test_short_training_improves_on_baseline_seeds(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor, hidden_sizes=(4,),
                                    training_seeds=(1,), n_particles=3,
                                    max_iterations=2, sim_config=SHORT)
        obj = harness.default_normalizers(spec, harness.ObjectiveSpec())
        params, result = harness.train(spec, obj, auto_normalize=False)
        assert result.iterations == 2
        assert result.evaluations == 3 * 3
        base = obj.scalar(harness.run_one(corridor, None, 1, SHORT))
        assert result.gbest_f <= base * 1.05

    def test_training_is_deterministic(self, corridor):
        spec = harness.TrainingSpec(scenario=corridor, hidden_sizes=(3,),
                                    training_seeds=(1,), n_particles=2,
                                    max_iterations=1, sim_config=SHORT)
        obj = harness.ObjectiveSpec()
        pa, ra = harness.train(spec, obj)
        pb, rb = harness.train(spec, obj)
        assert np.array_equal(pa.x, pb.x)
        assert ra.best_history == rb.best_history
