"""Two-level off-line training and on-line evaluation.

Outer loop: particle swarm search over the flat weight vector of a decision
rule. Inner loop: K seeded simulation runs per candidate, each scoring the
scalarized objective (delay, optionally CO2 or black carbon). On-line
evaluation pairs the trained rule against the fixed-timing baseline on
identical held-out seeds.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import decision_rule as dr
from . import emissions as em
from .feasibility import split_by_junction
from .microsim import SimConfig, run_simulation
from .network import Scenario
from .pso import PsoConfig, pso_minimize

WEIGHT_BOX = 5.0  # search box half-width per network weight


@dataclass(frozen=True)
class ObjectiveSpec:
    mode: str = "delay"          # delay | delay+co2 | delay+bc
    w1: float = 1.0
    w2: float = 1.0
    w3: float = 1.0
    n1: float = 1.0
    n2: float = 1.0
    n3: float = 1.0

    def __post_init__(self):
        if self.mode not in ("delay", "delay+co2", "delay+bc"):
            raise ValueError(f"unknown objective mode {self.mode!r}")
        if min(self.w1, self.w2, self.w3) < 0:
            raise ValueError("weights must be non-negative")
        if min(self.n1, self.n2, self.n3) <= 0:
            raise ValueError("normalizers must be positive")

    def scalar(self, kpi: "KpiRecord") -> float:
        value = self.w1 * kpi.mean_delay_s / self.n1
        if self.mode == "delay+co2":
            value += self.w2 * kpi.co2_kg / self.n2
        elif self.mode == "delay+bc":
            value += self.w3 * kpi.bc_g / self.n3
        return value


@dataclass(frozen=True)
class TrainingSpec:
    scenario: Scenario
    architecture: str = dr.FFNN
    hidden_sizes: tuple = (16, 8)
    window: dr.SensorWindow = field(default_factory=dr.SensorWindow)
    training_seeds: tuple = (1, 2, 3)
    n_particles: int = 5
    max_iterations: int = 45
    no_improve_window: int = 20
    pso_seed: int = 0
    sim_config: SimConfig = field(default_factory=SimConfig)
    workers: int = 0

    def __post_init__(self):
        if len(self.training_seeds) < 1:
            raise ValueError("need at least one training seed")


@dataclass(frozen=True)
class KpiRecord:
    mean_delay_s: float
    throughput: int
    departures: int
    carbon_kg: float
    co2_kg: float
    pm_g: float
    bc_g: float
    queue_by_link: dict
    junction_emissions: dict
    unfinished: int
    gridlock: bool
    no_trips: bool  # mean delay reported as 0 with no completed trips


@dataclass
class EvaluationReport:
    seeds: list
    candidate: list              # KpiRecord per seed
    baseline: list
    candidate_mean: dict
    baseline_mean: dict
    delta: dict                  # baseline mean - candidate mean
    percent: dict                # delta / baseline mean * 100
    delay_co2_r: float = None
    delay_co2_p: float = None
    delay_bc_r: float = None
    delay_bc_p: float = None


def kpi_delay(trips):
    """Mean per-trip delay (s/veh) over completed trips, floored at 0 each.

    Unfinished trips are excluded; an empty set reports 0 with a flag.
    """
    delays = [max(tr.arrive_s - tr.depart_s - tr.free_flow_s, 0.0)
              for tr in trips if tr.arrive_s is not None]
    if not delays:
        return 0.0, True
    return sum(delays) / len(delays), False


def detector_saturations(net):
    """Normalization counts per detector: lanes x 0.5 veh/s x period."""
    return np.array([
        net.links[d.link_id].lane_count * dr.DEFAULT_SATURATION_VPS
        * d.aggregation_period
        for d in net.detectors])


def make_controller(scenario: Scenario, params: dr.DecisionRuleParams):
    """Decision-epoch callback: state matrix -> forward pass -> projection."""
    net = scenario.network
    controlled = [net.signal_plans[j]
                  for j in scenario.scope.controlled_junctions]
    g_min = np.concatenate([[p.g_min for p in plan.phases]
                            for plan in controlled])
    g_max = np.concatenate([[p.g_max for p in plan.phases]
                            for plan in controlled])
    sat = detector_saturations(net)
    if params.n_sensors != len(net.detectors):
        raise ValueError(
            f"rule expects {params.n_sensors} sensors, scenario has "
            f"{len(net.detectors)} detectors")
    if params.n_phases != g_min.size:
        raise ValueError(
            f"rule emits {params.n_phases} phases, scope needs {g_min.size}")

    def controller(t, detector_log):
        q = dr.build_state_matrix(detector_log.counts, params.window, t)
        mu = dr.forward(params, dr.normalize_state(q, sat), g_min, g_max)
        flat, _lams = split_by_junction(mu, controlled)
        out = {}
        i = 0
        for plan in controlled:
            n = len(plan.phases)
            out[plan.junction_id] = tuple(flat[i:i + n])
            i += n
        return out

    return controller


def run_one(scenario: Scenario, params, seed: int,
            sim_config: SimConfig = None) -> KpiRecord:
    """One seeded run with streaming emission accounting; params None means
    the fixed default timings."""
    sim_config = sim_config or SimConfig()
    factors = em.build_factors(scenario.emission_factors)
    acc = em.EmissionAccumulator(scenario.network, factors,
                                 dt=sim_config.dt)
    controller = None if params is None else make_controller(scenario, params)
    out = run_simulation(scenario, controller=controller, seed=seed,
                         config=sim_config, observers=(acc.observe,))
    record = acc.finalize()
    delay, no_trips = kpi_delay(out.trips)
    return KpiRecord(
        mean_delay_s=delay,
        throughput=out.completed,
        departures=out.departures,
        carbon_kg=record.carbon_kg,
        co2_kg=record.co2_kg,
        pm_g=record.pm_g,
        bc_g=record.bc_g,
        queue_by_link=out.queue_mean,
        junction_emissions=record.by_junction,
        unfinished=len(out.unfinished),
        gridlock=out.gridlock,
        no_trips=no_trips)


def _run_one_job(args):
    scenario, vector, template, seed, sim_config = args
    params = None if vector is None else template.with_vector(vector)
    return run_one(scenario, params, seed, sim_config)


def run_many(jobs, workers: int = 0):
    """Ordered fan-out of (scenario, vector, template, seed, cfg) jobs."""
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one_job, jobs))
    return [_run_one_job(j) for j in jobs]


def evaluate_objective(params: dr.DecisionRuleParams, spec: TrainingSpec,
                       objective: ObjectiveSpec, workers: int = None) -> float:
    """Mean scalarized objective over the K training seeds."""
    workers = spec.workers if workers is None else workers
    template = params
    jobs = [(spec.scenario, params.x, template, s, spec.sim_config)
            for s in spec.training_seeds]
    kpis = run_many(jobs, workers)
    return float(np.mean([objective.scalar(k) for k in kpis]))


def params_template(spec: TrainingSpec) -> dr.DecisionRuleParams:
    net = spec.scenario.network
    n_phases = sum(len(net.signal_plans[j].phases)
                   for j in spec.scenario.scope.controlled_junctions)
    return dr.DecisionRuleParams.zeros(
        spec.architecture, spec.hidden_sizes, len(net.detectors),
        spec.window, n_phases)


def default_normalizers(spec: TrainingSpec, objective: ObjectiveSpec
                        ) -> ObjectiveSpec:
    """Scale each objective term by its fixed-timing baseline mean."""
    jobs = [(spec.scenario, None, None, s, spec.sim_config)
            for s in spec.training_seeds]
    kpis = run_many(jobs, spec.workers)
    n1 = max(float(np.mean([k.mean_delay_s for k in kpis])), 1e-9)
    n2 = max(float(np.mean([k.co2_kg for k in kpis])), 1e-9)
    n3 = max(float(np.mean([k.bc_g for k in kpis])), 1e-9)
    return replace(objective, n1=n1, n2=n2, n3=n3)


def train(spec: TrainingSpec, objective: ObjectiveSpec,
          checkpoint_path=None, progress=None, auto_normalize: bool = True):
    """Off-line optimization of the rule weights; returns (params, result)."""
    template = params_template(spec)
    if auto_normalize:
        objective = default_normalizers(spec, objective)
    dim = template.x.size
    cfg = PsoConfig(
        n_particles=spec.n_particles,
        lower=np.full(dim, -WEIGHT_BOX), upper=np.full(dim, WEIGHT_BOX),
        max_iterations=spec.max_iterations,
        no_improve_window=spec.no_improve_window,
        seed=spec.pso_seed)

    def evaluate_batch(vectors):
        jobs = [(spec.scenario, v, template, s, spec.sim_config)
                for v in vectors for s in spec.training_seeds]
        kpis = run_many(jobs, spec.workers)
        k = len(spec.training_seeds)
        return [float(np.mean([objective.scalar(kpi)
                               for kpi in kpis[i * k:(i + 1) * k]]))
                for i in range(len(vectors))]

    result = pso_minimize(None, cfg, progress=progress,
                          evaluator=evaluate_batch,
                          checkpoint_path=checkpoint_path)
    return template.with_vector(result.gbest), result


_KPI_SCALARS = ("mean_delay_s", "throughput", "carbon_kg", "co2_kg",
                "pm_g", "bc_g", "departures")


def _means(kpis):
    return {k: float(np.mean([getattr(r, k) for r in kpis]))
            for k in _KPI_SCALARS}


def evaluate_online(params: dr.DecisionRuleParams, scenario: Scenario,
                    eval_seeds, sim_config: SimConfig = None,
                    workers: int = 0) -> EvaluationReport:
    """Paired candidate-vs-baseline evaluation on identical seeds."""
    eval_seeds = list(eval_seeds)
    if not eval_seeds:
        raise ValueError("need at least one evaluation seed")
    sim_config = sim_config or SimConfig()
    template = params
    jobs = ([(scenario, params.x, template, s, sim_config)
             for s in eval_seeds]
            + [(scenario, None, None, s, sim_config) for s in eval_seeds])
    kpis = run_many(jobs, workers)
    cand = kpis[:len(eval_seeds)]
    base = kpis[len(eval_seeds):]

    cmean, bmean = _means(cand), _means(base)
    delta = {k: bmean[k] - cmean[k] for k in _KPI_SCALARS}
    percent = {k: (100.0 * delta[k] / bmean[k]) if bmean[k] else 0.0
               for k in _KPI_SCALARS}

    report = EvaluationReport(
        seeds=eval_seeds, candidate=cand, baseline=base,
        candidate_mean=cmean, baseline_mean=bmean,
        delta=delta, percent=percent)

    if len(eval_seeds) >= 3:
        d_red = [b.mean_delay_s - c.mean_delay_s
                 for b, c in zip(base, cand)]
        co2_red = [b.co2_kg - c.co2_kg for b, c in zip(base, cand)]
        bc_red = [b.bc_g - c.bc_g for b, c in zip(base, cand)]
        if np.std(d_red) > 0 and np.std(co2_red) > 0:
            r, p = stats.pearsonr(d_red, co2_red)
            report.delay_co2_r, report.delay_co2_p = float(r), float(p)
        if np.std(d_red) > 0 and np.std(bc_red) > 0:
            r, p = stats.pearsonr(d_red, bc_red)
            report.delay_bc_r, report.delay_bc_p = float(r), float(p)
    return report


def demand_sweep(params: dr.DecisionRuleParams, scenario: Scenario,
                 factors, eval_seeds, sim_config: SimConfig = None,
                 workers: int = 0):
    """KPI means per demand scale factor with relative increases vs 1.0.

    Returns a list of dicts with keys factor, kpi means, and *_rel entries
    (ratios against the factor-1.0 row).
    """
    rows = []
    for f in factors:
        scaled = replace(scenario, demand=scenario.demand.scaled(f))
        vec = None if params is None else params.x
        jobs = [(scaled, vec, params, s, sim_config or SimConfig())
                for s in eval_seeds]
        kpis = run_many(jobs, workers)
        row = {"factor": f}
        row.update(_means(kpis))
        rows.append(row)
    base = next((r for r in rows if abs(r["factor"] - 1.0) < 1e-12), rows[0])
    for row in rows:
        for k in _KPI_SCALARS:
            row[k + "_rel"] = row[k] / base[k] if base[k] else float("nan")
    return rows


def sensor_relocation_compare(scenario_a: Scenario, scenario_b: Scenario,
                              spec: TrainingSpec, objective: ObjectiveSpec,
                              eval_seeds, params_a=None, params_b=None):
    """Train (unless given) one rule per detector layout, evaluate both on
    the same held-out seeds, and report the paired KPI tables."""
    if params_a is None:
        params_a, _ = train(replace(spec, scenario=scenario_a), objective)
    if params_b is None:
        params_b, _ = train(replace(spec, scenario=scenario_b), objective)
    report_a = evaluate_online(params_a, scenario_a, eval_seeds,
                               spec.sim_config, spec.workers)
    report_b = evaluate_online(params_b, scenario_b, eval_seeds,
                               spec.sim_config, spec.workers)
    deltas = {k: report_a.candidate_mean[k] - report_b.candidate_mean[k]
              for k in _KPI_SCALARS}
    return {"layout_a": report_a, "layout_b": report_b,
            "layout_delta": deltas,
            "params_a": params_a, "params_b": params_b}
