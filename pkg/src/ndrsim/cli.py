"""ndrctl command line interface.

Subcommands: validate, train, evaluate, sweep-demand, compare-sensors,
replay. Exit codes: 0 success, 1 usage error, 2 validation failure,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import decision_rule as dr
from . import harness, report
from .network import ScenarioError, validate_network
from .scenario import load_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ndrctl: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int_list(text):
    return [int(s) for s in text.split(",") if s]


def _float_list(text):
    return [float(s) for s in text.split(",") if s]


def build_parser() -> _Parser:
    p = _Parser(prog="ndrctl",
                description="Train and evaluate neural green-split rules "
                            "on simulated networks.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")

    t = sub.add_parser("train", help="off-line training of a decision rule")
    t.add_argument("scenario")
    t.add_argument("--objective", default="delay",
                   choices=["delay", "delay+co2", "delay+bc"])
    t.add_argument("--arch", default="ffnn", choices=["ffnn", "rnn"])
    t.add_argument("--hidden", type=_int_list, default=[16, 8],
                   help="comma-separated hidden layer sizes")
    t.add_argument("--particles", type=int, default=5)
    t.add_argument("--iterations", type=int, default=45)
    t.add_argument("--stall-window", type=int, default=20)
    t.add_argument("--train-seeds", type=_int_list, default=[1, 2, 3])
    t.add_argument("--pso-seed", type=int, default=0)
    t.add_argument("--workers", type=int, default=0)
    t.add_argument("--out", required=True, help="parameter file to write")
    t.add_argument("--out-dir", default=None,
                   help="directory for progress CSV and figures")

    e = sub.add_parser("evaluate",
                       help="paired rule-vs-baseline on-line evaluation")
    e.add_argument("scenario")
    e.add_argument("params")
    e.add_argument("--seeds", type=_int_list, required=True)
    e.add_argument("--workers", type=int, default=0)
    e.add_argument("--out-dir", default="evaluation")

    s = sub.add_parser("sweep-demand", help="KPIs under scaled demand")
    s.add_argument("scenario")
    s.add_argument("params")
    s.add_argument("--factors", type=_float_list,
                   default=[1.0, 1.1, 1.2, 1.3])
    s.add_argument("--seeds", type=_int_list, required=True)
    s.add_argument("--workers", type=int, default=0)
    s.add_argument("--out-dir", default="sweep")

    c = sub.add_parser("compare-sensors",
                       help="train and compare two detector layouts")
    c.add_argument("scenario_a")
    c.add_argument("scenario_b")
    c.add_argument("--seeds", type=_int_list, required=True)
    c.add_argument("--params-a", default=None)
    c.add_argument("--params-b", default=None)
    c.add_argument("--objective", default="delay",
                   choices=["delay", "delay+co2", "delay+bc"])
    c.add_argument("--train-seeds", type=_int_list, default=[1, 2, 3])
    c.add_argument("--particles", type=int, default=5)
    c.add_argument("--iterations", type=int, default=10)
    c.add_argument("--workers", type=int, default=0)
    c.add_argument("--out-dir", default="sensor_compare")

    r = sub.add_parser("replay", help="run one seed and export artifacts")
    r.add_argument("scenario")
    r.add_argument("--params", default=None,
                   help="decision rule file; default timings when omitted")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--export-trajectories", action="store_true")
    r.add_argument("--out-dir", default="replay")

    return p


def _load(path):
    try:
        return load_scenario(path)
    except ScenarioError as exc:
        print(f"ndrctl: {exc}", file=sys.stderr)
        sys.exit(EXIT_VALIDATION)


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    diags = validate_network(scenario.network, scenario.demand,
                             scenario.scope)
    for d in diags:
        print(d)
    if diags:
        return EXIT_VALIDATION
    print(f"{args.scenario}: ok "
          f"({len(scenario.network.links)} links, "
          f"{len(scenario.network.signal_plans)} junctions, "
          f"{len(scenario.network.detectors)} detectors)")
    return EXIT_OK


def cmd_train(args) -> int:
    scenario = _load(args.scenario)
    spec = harness.TrainingSpec(
        scenario=scenario, architecture=args.arch,
        hidden_sizes=tuple(args.hidden),
        training_seeds=tuple(args.train_seeds),
        n_particles=args.particles, max_iterations=args.iterations,
        no_improve_window=args.stall_window, pso_seed=args.pso_seed,
        workers=args.workers)
    objective = harness.ObjectiveSpec(mode=args.objective)
    progress_rows = []

    def progress(k, best, mean, wall):
        progress_rows.append((k, best, mean, wall))
        print(f"iter {k:3d}  best {best:.6f}  swarm mean {mean:.6f}")

    params, result = harness.train(spec, objective, progress=progress)
    dr.save_params(params, args.out)
    print(f"wrote {args.out} ({params.x.size} weights, "
          f"{result.iterations} iterations, "
          f"{result.evaluations} evaluations)")
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        report.write_progress_csv(
            os.path.join(args.out_dir, "training_progress.csv"),
            progress_rows)
        if progress_rows:
            report.plot_training_progress(
                os.path.join(args.out_dir, "training_progress.png"),
                progress_rows)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    scenario = _load(args.scenario)
    params = dr.load_params(args.params)
    rep = harness.evaluate_online(params, scenario, args.seeds,
                                  workers=args.workers)
    report.write_evaluation(args.out_dir, rep)
    print(report.summary_text(rep))
    print(f"reports written to {args.out_dir}/")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _load(args.scenario)
    params = dr.load_params(args.params)
    rows = harness.demand_sweep(params, scenario, args.factors, args.seeds,
                                workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    report.write_sweep_csv(os.path.join(args.out_dir, "demand_sweep.csv"),
                           rows)
    report.plot_sweep(os.path.join(args.out_dir, "demand_sweep.png"), rows)
    for row in rows:
        print(f"factor {row['factor']:.2f}: "
              f"delay {row['mean_delay_s']:.1f} s "
              f"(x{row['mean_delay_s_rel']:.2f}), "
              f"throughput {row['throughput']:.0f} "
              f"(x{row['throughput_rel']:.2f})")
    return EXIT_OK


def cmd_compare_sensors(args) -> int:
    scen_a = _load(args.scenario_a)
    scen_b = _load(args.scenario_b)
    spec = harness.TrainingSpec(
        scenario=scen_a, training_seeds=tuple(args.train_seeds),
        n_particles=args.particles, max_iterations=args.iterations,
        workers=args.workers)
    objective = harness.ObjectiveSpec(mode=args.objective)
    params_a = dr.load_params(args.params_a) if args.params_a else None
    params_b = dr.load_params(args.params_b) if args.params_b else None
    result = harness.sensor_relocation_compare(
        scen_a, scen_b, spec, objective, args.seeds,
        params_a=params_a, params_b=params_b)
    os.makedirs(args.out_dir, exist_ok=True)
    report.write_evaluation(os.path.join(args.out_dir, "layout_a"),
                            result["layout_a"])
    report.write_evaluation(os.path.join(args.out_dir, "layout_b"),
                            result["layout_b"])
    print("layout A:")
    print(report.summary_text(result["layout_a"]))
    print("layout B:")
    print(report.summary_text(result["layout_b"]))
    delta = result["layout_delta"]
    print(f"A-B delay delta: {delta['mean_delay_s']:+.2f} s/veh")
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = _load(args.scenario)
    params = dr.load_params(args.params) if args.params else None
    cfg = harness.SimConfig(record_trajectories=args.export_trajectories)
    from . import emissions as em
    from .microsim import run_simulation
    factors = em.build_factors(scenario.emission_factors)
    acc = em.EmissionAccumulator(scenario.network, factors, dt=cfg.dt)
    controller = (None if params is None
                  else harness.make_controller(scenario, params))
    out = run_simulation(scenario, controller=controller, seed=args.seed,
                         config=cfg, observers=(acc.observe,))
    record = acc.finalize()
    os.makedirs(args.out_dir, exist_ok=True)
    report.write_trip_csv(os.path.join(args.out_dir, "trips.csv"),
                          out.trips + out.unfinished)
    report.write_emission_csv(os.path.join(args.out_dir, "emissions.csv"),
                              record)
    report.plot_queue_by_link(os.path.join(args.out_dir, "queues.png"),
                              out.queue_mean)
    if args.export_trajectories:
        report.write_trajectory_csv(
            os.path.join(args.out_dir, "trajectories.csv"),
            out.trajectories)
    delay, _ = harness.kpi_delay(out.trips)
    print(f"seed {args.seed}: {out.completed} trips completed, "
          f"{len(out.unfinished)} unfinished, mean delay {delay:.1f} s, "
          f"CO2 {record.co2_kg:.1f} kg, BC {record.bc_g:.2f} g")
    if out.gridlock:
        print("warning: gridlock detected during the run")
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep-demand": cmd_sweep,
    "compare-sensors": cmd_compare_sensors,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except ScenarioError as exc:
        print(f"ndrctl: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"ndrctl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
