"""Delimited reports and the figures rendered alongside them.

Every writer takes an output directory; CSVs are the stable interface,
figures are PNG companions for quick inspection.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .harness import _KPI_SCALARS  # noqa: E402

KPI_COLUMNS = ("seed",) + _KPI_SCALARS + ("unfinished", "gridlock")


def _path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def write_kpi_csv(path, seeds, kpis) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(KPI_COLUMNS)
        for seed, k in zip(seeds, kpis):
            w.writerow([seed] + [getattr(k, c) for c in _KPI_SCALARS]
                       + [k.unfinished, int(k.gridlock)])


def write_trip_csv(path, trips) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vehicle_id", "class", "depart_s", "arrive_s",
                    "free_flow_s"])
        for tr in trips:
            arrive = "" if tr.arrive_s is None else f"{tr.arrive_s:.3f}"
            w.writerow([tr.vehicle_id, tr.vehicle_class,
                        f"{tr.depart_s:.3f}", arrive,
                        f"{tr.free_flow_s:.3f}"])


def write_trajectory_csv(path, trajectories) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "vehicle_id", "class", "link_id", "position_m",
                    "speed_mps", "accel_mps2"])
        for (t, vid, cls, link, pos, speed, accel) in trajectories:
            w.writerow([f"{t:.1f}", vid, cls, link, f"{pos:.3f}",
                        f"{speed:.3f}", f"{accel:.3f}"])


def write_emission_csv(path, record) -> None:
    """Rows of (scope, species, value, unit) for one run."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "species", "value", "unit"])
        w.writerow(["network", "carbon", f"{record.carbon_kg:.6f}", "kg"])
        w.writerow(["network", "co2", f"{record.co2_kg:.6f}", "kg"])
        w.writerow(["network", "pm", f"{record.pm_g:.6f}", "g"])
        w.writerow(["network", "bc", f"{record.bc_g:.6f}", "g"])
        for jid, vals in record.by_junction.items():
            w.writerow([f"junction:{jid}", "carbon",
                        f"{vals['carbon_kg']:.6f}", "kg"])
            w.writerow([f"junction:{jid}", "co2",
                        f"{vals['co2_kg']:.6f}", "kg"])
            w.writerow([f"junction:{jid}", "pm", f"{vals['pm_g']:.6f}", "g"])
            w.writerow([f"junction:{jid}", "bc", f"{vals['bc_g']:.6f}", "g"])


def write_evaluation(out_dir, report) -> None:
    write_kpi_csv(_path(out_dir, "candidate_kpis.csv"),
                  report.seeds, report.candidate)
    write_kpi_csv(_path(out_dir, "baseline_kpis.csv"),
                  report.seeds, report.baseline)
    with open(_path(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kpi", "baseline_mean", "candidate_mean",
                    "improvement", "improvement_pct"])
        for k in _KPI_SCALARS:
            w.writerow([k, f"{report.baseline_mean[k]:.6f}",
                        f"{report.candidate_mean[k]:.6f}",
                        f"{report.delta[k]:.6f}",
                        f"{report.percent[k]:.3f}"])
        if report.delay_co2_r is not None:
            w.writerow(["pearson_delay_co2_r", f"{report.delay_co2_r:.4f}",
                        "", "", ""])
            w.writerow(["pearson_delay_co2_p", f"{report.delay_co2_p:.4g}",
                        "", "", ""])
        if report.delay_bc_r is not None:
            w.writerow(["pearson_delay_bc_r", f"{report.delay_bc_r:.4f}",
                        "", "", ""])
            w.writerow(["pearson_delay_bc_p", f"{report.delay_bc_p:.4g}",
                        "", "", ""])
    plot_paired_kpis(_path(out_dir, "kpi_comparison.png"), report)
    plot_reduction_scatter(_path(out_dir, "delay_emission_scatter.png"),
                           report)


def summary_text(report) -> str:
    lines = ["KPI means over %d paired seeds" % len(report.seeds),
             "%-14s %12s %12s %10s" % ("kpi", "baseline", "candidate", "%")]
    for k in _KPI_SCALARS:
        lines.append("%-14s %12.3f %12.3f %9.1f%%" % (
            k, report.baseline_mean[k], report.candidate_mean[k],
            report.percent[k]))
    if report.delay_co2_r is not None:
        lines.append("delay/CO2 reduction correlation: r=%.3f p=%.3g"
                     % (report.delay_co2_r, report.delay_co2_p))
    if report.delay_bc_r is not None:
        lines.append("delay/BC reduction correlation:  r=%.3f p=%.3g"
                     % (report.delay_bc_r, report.delay_bc_p))
    return "\n".join(lines)


def write_sweep_csv(path, rows) -> None:
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow([f"{row[k]:.6f}" if isinstance(row[k], float)
                        else row[k] for k in keys])


def write_progress_csv(path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "gbest", "mean_objective", "wall_s"])
        for row in history:
            w.writerow([row[0], f"{row[1]:.9g}", f"{row[2]:.9g}",
                        f"{row[3]:.3f}"])


# -- figures ---------------------------------------------------------------

def plot_paired_kpis(path, report) -> None:
    keys = ["mean_delay_s", "throughput", "co2_kg", "bc_g"]
    fig, axes = plt.subplots(1, len(keys), figsize=(4 * len(keys), 3.5))
    for ax, key in zip(axes, keys):
        base = [getattr(k, key) for k in report.baseline]
        cand = [getattr(k, key) for k in report.candidate]
        ax.boxplot([base, cand], tick_labels=["baseline", "rule"])
        ax.set_title(key)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_reduction_scatter(path, report) -> None:
    d_red = [b.mean_delay_s - c.mean_delay_s
             for b, c in zip(report.baseline, report.candidate)]
    co2_red = [b.co2_kg - c.co2_kg
               for b, c in zip(report.baseline, report.candidate)]
    bc_red = [b.bc_g - c.bc_g
              for b, c in zip(report.baseline, report.candidate)]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.scatter(d_red, co2_red, s=18)
    ax1.set_xlabel("delay reduction (s/veh)")
    ax1.set_ylabel("CO2 reduction (kg)")
    if report.delay_co2_r is not None:
        ax1.set_title(f"r={report.delay_co2_r:.2f}  p={report.delay_co2_p:.2g}")
    ax2.scatter(d_red, bc_red, s=18, color="tab:orange")
    ax2.set_xlabel("delay reduction (s/veh)")
    ax2.set_ylabel("BC reduction (g)")
    if report.delay_bc_r is not None:
        ax2.set_title(f"r={report.delay_bc_r:.2f}  p={report.delay_bc_p:.2g}")
    for ax in (ax1, ax2):
        ax.axhline(0, color="gray", lw=0.7)
        ax.axvline(0, color="gray", lw=0.7)
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_progress(path, history) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([h[0] for h in history], [h[1] for h in history],
            marker="o", ms=3, label="best")
    ax.plot([h[0] for h in history], [h[2] for h in history],
            lw=0.8, alpha=0.7, label="swarm mean")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_queue_by_link(path, queue_mean) -> None:
    links = sorted(queue_mean)
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(links)), 4))
    ax.bar(range(len(links)), [queue_mean[l] for l in links])
    ax.set_xticks(range(len(links)))
    ax.set_xticklabels(links, rotation=45, ha="right")
    ax.set_ylabel("mean vehicles in queue")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(path, rows) -> None:
    factors = [r["factor"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, style in (("mean_delay_s_rel", "o-"), ("co2_kg_rel", "s-"),
                       ("bc_g_rel", "^-"), ("throughput_rel", "d-")):
        ax.plot(factors, [r[key] for r in rows], style, label=key[:-4])
    ax.plot(factors, factors, "k--", lw=0.8, label="linear")
    ax.set_xlabel("demand factor")
    ax.set_ylabel("relative to factor 1.0")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
