"""Acceptance suite: one test per criterion, run with `pytest -v`.

Each test prints a single `CRITERION n: PASS` line with the measured margin
once its assertions hold; a pytest failure on the corresponding test is the
FAIL line for that criterion.
"""

import filecmp
import time
from dataclasses import replace

import numpy as np
import pytest

import ndrsim
from ndrsim import decision_rule as dr
from ndrsim import emissions as em
from ndrsim import harness, report
from ndrsim.feasibility import DUAL_TOL, FeasibleSet, project, solve_dual
from ndrsim.microsim import Simulation
from ndrsim.pso import PsoConfig, pso_minimize
from ndrsim.scenario import load_scenario

from oracles import bisect_dual, dykstra_project, random_projection_instances

TRAIN_BUDGET_S = 15 * 60.0


def _passed(n, detail):
    print(f"CRITERION {n}: PASS - {detail}")


@pytest.fixture(scope="module")
def desk():
    return load_scenario(ndrsim.bundled_scenario("corridor2"))


@pytest.fixture(scope="module")
def trained(desk):
    """One trained feedforward rule on the desk scenario, shared by 7/8."""
    spec = harness.TrainingSpec(scenario=desk, max_iterations=6,
                                no_improve_window=20)
    t0 = time.monotonic()
    params, result = harness.train(spec, harness.ObjectiveSpec(mode="delay"))
    return params, result, time.monotonic() - t0


@pytest.fixture(scope="module")
def paired(trained, desk):
    """30 paired held-out evaluations, shared by criteria 7 and 8."""
    params, _, train_wall = trained
    t0 = time.monotonic()
    rep = harness.evaluate_online(params, desk, list(range(10, 40)))
    return rep, train_wall + (time.monotonic() - t0)


def projection_instances():
    return random_projection_instances(np.random.default_rng(2026), 1000)


def test_criterion_01_projection_matches_qp_oracle():
    instances = projection_instances()
    t0 = time.monotonic()
    solutions = []
    for ghat, lo, hi, b in instances:
        fs = FeasibleSet(lo, hi, b)
        g, _ = project(ghat, fs)
        solutions.append(g)
        assert np.all(g >= lo - 1e-9) and np.all(g <= hi + 1e-9)
        assert abs(g.sum() - b) <= 1e-9
        # idempotence to 1e-12
        g2, _ = project(g, fs)
        assert np.max(np.abs(g2 - g)) <= 1e-12
    elapsed = time.monotonic() - t0

    # numeric oracle: alternating projections, batched by problem size
    by_size = {}
    for (ghat, lo, hi, b), g in zip(instances, solutions):
        by_size.setdefault(ghat.size, []).append((ghat, lo, hi, b, g))
    worst = 0.0
    for size, batch in by_size.items():
        ghat = np.stack([e[0] for e in batch])
        lo = np.stack([e[1] for e in batch])
        hi = np.stack([e[2] for e in batch])
        b = np.array([e[3] for e in batch])
        g = np.stack([e[4] for e in batch])
        ref = dykstra_project(ghat, lo, hi, b)
        ours = np.sum((g - ghat) ** 2, axis=1)
        theirs = np.sum((ref - ghat) ** 2, axis=1)
        worst = max(worst, float(np.max(np.abs(ours - theirs))))
        assert np.all(np.abs(ours - theirs) <= 1e-6)

    # non-expansiveness on 1,000 random pairs
    rng = np.random.default_rng(77)
    for ghat, lo, hi, b in instances:
        fs = FeasibleSet(lo, hi, b)
        other = ghat + rng.uniform(-10.0, 10.0, size=ghat.size)
        ga, _ = project(ghat, fs)
        gb, _ = project(other, fs)
        assert (np.linalg.norm(ga - gb)
                <= np.linalg.norm(ghat - other) + 1e-9)

    assert elapsed < 5.0
    _passed(1, f"1000 instances, worst objective gap {worst:.2e}, "
               f"{elapsed:.2f}s")


def test_criterion_02_dual_matches_bisection_oracle():
    worst_res = worst_gap = 0.0
    for ghat, lo, hi, b in projection_instances():
        lam = solve_dual(ghat, FeasibleSet(lo, hi, b))
        res = abs(np.clip(ghat - lam, lo, hi).sum() - b)
        gap = abs(lam - bisect_dual(ghat, lo, hi, b))
        worst_res = max(worst_res, res)
        worst_gap = max(worst_gap, gap)
        assert res <= DUAL_TOL
        assert gap <= 1e-9
    _passed(2, f"worst residual {worst_res:.2e}, "
               f"worst oracle gap {worst_gap:.2e}")


def test_criterion_03_pso_benchmarks():
    t0 = time.monotonic()
    sphere_hits = 0
    for seed in range(20):
        cfg = PsoConfig(n_particles=20, lower=np.full(10, -5.12),
                        upper=np.full(10, 5.12), max_iterations=200,
                        no_improve_window=200, seed=seed)
        res = pso_minimize(lambda x: float(np.sum(x * x)), cfg)
        sphere_hits += res.gbest_f < 1e-3
        assert all(b <= a for a, b in zip(res.best_history,
                                          res.best_history[1:]))

    rosen_vals = []
    for seed in range(20):
        cfg = PsoConfig(n_particles=30, lower=np.full(2, -2.048),
                        upper=np.full(2, 2.048), max_iterations=500,
                        no_improve_window=500, seed=seed)
        res = pso_minimize(
            lambda x: float(100.0 * (x[1] - x[0] ** 2) ** 2
                            + (1.0 - x[0]) ** 2), cfg)
        rosen_vals.append(res.gbest_f)
        assert all(b <= a for a, b in zip(res.best_history,
                                          res.best_history[1:]))
    elapsed = time.monotonic() - t0

    assert sphere_hits >= 19  # >= 95% of 20 runs
    assert np.median(rosen_vals) < 1e-2
    assert elapsed < 30.0
    _passed(3, f"sphere {sphere_hits}/20 below 1e-3, rosenbrock median "
               f"{np.median(rosen_vals):.1e}, {elapsed:.1f}s")


def test_criterion_04_neural_forward_correctness():
    import math
    window = dr.SensorWindow()
    rng = np.random.default_rng(1)
    q = rng.uniform(size=(3, window.width))
    g_min = np.array([7.0, 12.0])
    g_max = np.array([43.0, 30.0])

    # zero weights -> exact midpoints for both architectures
    for arch, hidden in ((dr.FFNN, (16, 8)), (dr.RNN, (8,))):
        p = dr.DecisionRuleParams.zeros(arch, hidden, 3, window, 2)
        mu = dr.forward(p, q, g_min, g_max)
        assert np.array_equal(mu, (g_min + g_max) / 2.0)

    # hand-computed single-neuron feedforward case
    w1 = dr.SensorWindow(m=0, n=1, dt=120.0)
    p = dr.DecisionRuleParams(dr.FFNN, (1,), 1, w1, 1,
                              np.array([1.0, 1.0, 0.0, 1.0, 0.0]))
    h = 1.0 / (1.0 + math.exp(-1.0))
    expected = 1.0 / (1.0 + math.exp(-h))
    mu = dr.ffnn_forward(p, np.array([[1.0, 0.0]]), [0.0], [1.0])
    assert abs(mu[0] - expected) <= 1e-12

    # hand-computed single-unit recurrent case
    p = dr.DecisionRuleParams(dr.RNN, (1,), 1, w1, 1,
                              np.array([0.5, 0.1, 0.25, 2.0, -0.3]))
    h1 = 1.0 / (1.0 + math.exp(-(0.5 * 0.8 + 0.1)))
    h2 = 1.0 / (1.0 + math.exp(-(0.5 * 0.2 + 0.25 * h1 + 0.1)))
    expected = 1.0 / (1.0 + math.exp(-(2.0 * h2 - 0.3)))
    mu = dr.rnn_forward(p, np.array([[0.8, 0.2]]), [0.0], [1.0])
    assert abs(mu[0] - expected) <= 1e-12

    # time-column permutation symmetry of the feedforward rule
    p = dr.DecisionRuleParams.zeros(dr.FFNN, (6, 4), 3, window, 2)
    p = p.with_vector(rng.normal(size=p.x.size))
    base = dr.ffnn_forward(p, q, g_min, g_max)
    perm = rng.permutation(window.width)
    first = p.x[:6 * 3 * window.width].reshape(6, 3, window.width)
    x2 = p.x.copy()
    x2[:6 * 3 * window.width] = first[:, :, perm].reshape(-1)
    swapped = dr.ffnn_forward(p.with_vector(x2), q[:, perm], g_min, g_max)
    assert np.allclose(base, swapped, atol=1e-12)

    # recurrent order-sensitivity witness
    p = dr.DecisionRuleParams(dr.RNN, (1,), 1, w1, 1,
                              np.array([1.0, 0.0, 1.0, 1.0, 0.0]))
    fwd = dr.rnn_forward(p, np.array([[1.0, 0.0]]), [0.0], [1.0])
    rev = dr.rnn_forward(p, np.array([[0.0, 1.0]]), [0.0], [1.0])
    assert abs(fwd[0] - rev[0]) > 1e-3
    _passed(4, "midpoints exact, hand cases within 1e-12, symmetry and "
               "order-sensitivity hold")


def test_criterion_05_conservation_and_determinism(desk, tmp_path):
    sim = Simulation(desk, seed=1)
    for _ in range(1200):
        sim.step()
    departed, completed, in_net = np.asarray(sim.ledger).T
    assert np.array_equal(departed, completed + in_net)

    spec = harness.TrainingSpec(scenario=desk)
    params = harness.params_template(spec)
    jobs = ([(desk, None, None, s, harness.SimConfig()) for s in (1, 2)]
            + [(desk, params.x, params, s, harness.SimConfig())
               for s in (1, 2)])
    paths = []
    for tag, workers in (("serial", 0), ("pool_a", 2), ("pool_b", 2)):
        kpis = harness.run_many(jobs, workers=workers)
        path = tmp_path / f"kpis_{tag}.csv"
        report.write_kpi_csv(path, [1, 2, 1, 2], kpis)
        paths.append(path)
    assert filecmp.cmp(paths[0], paths[1], shallow=False)
    assert filecmp.cmp(paths[1], paths[2], shallow=False)
    _passed(5, f"{len(departed)} steps balanced, KPI CSVs byte-identical "
               "across serial and 2-worker reruns")


def test_criterion_06_emission_conversions(desk):
    # exact molar-mass conversion on representable inputs
    for carbon in (0.0, 0.5, 1.0, 3.0, 12.0, 0.375, 2.0 ** -20):
        assert em.convert_carbon_to_co2(carbon) == carbon * (44.0 / 12.0)
    rec = em.EmissionRecord(carbon_kg=7.25)
    assert rec.co2_kg == 7.25 * 44.0 / 12.0

    # property grids: idle floor, acceleration and gradient monotonicity
    factors = em.DEFAULT_FACTORS
    for cls in factors:
        idle = factors[cls].idle_rate
        assert em.instantaneous_rates(factors, cls, 0.0, 0.0)[0] == idle
        for speed in np.linspace(0.0, 30.0, 7):
            fuels_a = [em.instantaneous_rates(factors, cls, speed, a)[0]
                       for a in np.linspace(-2.0, 3.0, 11)]
            assert all(b >= a - 1e-12 for a, b in zip(fuels_a, fuels_a[1:]))
            assert all(f >= idle for f in fuels_a)
            fuels_g = [em.instantaneous_rates(factors, cls, speed, 1.0, g)[0]
                       for g in np.linspace(-0.1, 0.1, 11)]
            assert all(b >= a - 1e-12 for a, b in zip(fuels_g, fuels_g[1:]))

    # junction totals never exceed network totals on real runs
    for seed in (1, 2, 3):
        kpi = harness.run_one(desk, None, seed)
        j_total = sum(v["carbon_kg"] for v in kpi.junction_emissions.values())
        assert j_total <= kpi.carbon_kg + 1e-12
        assert kpi.co2_kg == em.convert_carbon_to_co2(kpi.carbon_kg)
    _passed(6, "44/12 exact, monotone on grids, junction <= network on "
               "3 seeded runs")


def test_criterion_07_desk_training_beats_baseline(paired):
    rep, wall = paired
    base = np.array([k.mean_delay_s for k in rep.baseline[:10]])
    cand = np.array([k.mean_delay_s for k in rep.candidate[:10]])
    mean_cut = 1.0 - cand.mean() / base.mean()
    assert mean_cut >= 0.10
    assert np.all(cand <= base)
    assert wall < TRAIN_BUDGET_S
    _passed(7, f"mean delay cut {100 * mean_cut:.1f}% over 10 held-out "
               f"seeds, no seed worse, {wall:.0f}s of "
               f"{TRAIN_BUDGET_S:.0f}s budget")


def test_criterion_08_delay_co2_correlation(paired):
    rep, _ = paired
    assert len(rep.seeds) >= 30
    assert rep.delay_co2_r is not None
    assert rep.delay_co2_r > 0.0
    _passed(8, f"delay/CO2 r={rep.delay_co2_r:.3f} (p={rep.delay_co2_p:.2g}) "
               f"over {len(rep.seeds)} paired runs; BC r={rep.delay_bc_r:.3f}"
               f" (p={rep.delay_bc_p:.2g}, no sign asserted)")


def test_criterion_09_demand_sweep():
    congested = load_scenario(ndrsim.bundled_scenario("corridor2_congested"))
    seeds = [1, 2, 3]

    # undersaturated regime: throughput tracks the demand factor
    light = replace(congested, demand=congested.demand.scaled(0.7))
    rows = harness.demand_sweep(None, light, [1.0, 1.1, 1.2], seeds)
    gaps = [abs(r["throughput_rel"] - r["factor"]) for r in rows]
    assert max(gaps) <= 0.05

    # congesting regime: delay grows faster than demand at +30%
    rows = harness.demand_sweep(None, congested, [1.0, 1.3], seeds)
    delay_growth = rows[1]["mean_delay_s_rel"]
    assert delay_growth > 1.3
    assert delay_growth > rows[1]["throughput_rel"]
    _passed(9, f"throughput within {100 * max(gaps):.1f}pp of factor when "
               f"undersaturated; delay x{delay_growth:.2f} at demand x1.30 "
               "when congesting")


def test_criterion_10_sensor_relocation_harness(desk, tmp_path):
    alt = load_scenario(ndrsim.bundled_scenario("corridor2_alt"))
    spec = harness.TrainingSpec(scenario=desk, hidden_sizes=(8,),
                                training_seeds=(1, 2), n_particles=3,
                                max_iterations=2)
    result = harness.sensor_relocation_compare(
        desk, alt, spec, harness.ObjectiveSpec(mode="delay"),
        eval_seeds=[50, 51, 52])

    assert result["params_a"].n_sensors == 4
    assert result["params_b"].n_sensors == 3
    for key in ("layout_a", "layout_b"):
        rep = result[key]
        assert len(rep.candidate) == len(rep.baseline) == 3
        for kpi in rep.candidate + rep.baseline:
            assert np.isfinite(kpi.mean_delay_s)
            assert np.isfinite(kpi.co2_kg)
        out = tmp_path / key
        report.write_evaluation(out, rep)
        assert (out / "summary.csv").exists()
        assert (out / "kpi_comparison.png").exists()
    assert set(result["layout_delta"]) == set(harness._KPI_SCALARS)
    _passed(10, "both detector layouts trained and evaluated; paired "
                f"delay delta {result['layout_delta']['mean_delay_s']:+.1f} "
                "s/veh (not asserted)")
