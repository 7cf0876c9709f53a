"""Run-matrix execution and output emission.

Matrix cells are shared-nothing jobs: each (cell, seed) builds its own world
and the merged CSV is canonically ordered, so results are byte-identical
regardless of parallelism. Plots are written as SVG with fixed hash salts and
no embedded timestamps, making reruns reproducible file-for-file.
"""

import csv
import io
import os
from collections import defaultdict
from dataclasses import replace
from multiprocessing import get_context

from .metrics import CSV_COLUMNS, RunResult, pdr_grand_ratio, pdr_mean, result_to_csv_row
from .scenario import expand_cells
from .world import World

PLOT_METRICS = ("fpr", "fnr", "dr", "pdr")


def run_single(cfg, seed, record_decisions=False):
    """One isolated world run; returns (RunResult, world)."""
    world = World(cfg, seed, record_decisions=record_decisions).run()
    return world.result(scenario_name=cfg.name), world


def _worker(args):
    cfg, seed = args
    try:
        result, _ = run_single(cfg, seed)
        return result
    except Exception as exc:  # a failed cell must not sink the matrix
        return RunResult(
            scenario=cfg.name, defense=cfg.defense, seed=seed,
            n_uavs=cfg.n_uavs, sim_time=cfg.sim_time,
            malicious_ratio=cfg.malicious_ratio, t_s=cfg.t_s,
            attack=cfg.attack, failure=f"{type(exc).__name__}: {exc}",
        )


def run_matrix(cfg, parallelism=1):
    """Execute every (cell, seed) job; results in canonical order."""
    cfg.validate()
    jobs = [(replace(cell, sweep={}), seed) for cell in expand_cells(cfg) for seed in cfg.seeds]
    if parallelism <= 1 or len(jobs) == 1:
        results = [_worker(j) for j in jobs]
    else:
        ctx = get_context("fork") if hasattr(os, "fork") else get_context("spawn")
        with ctx.Pool(parallelism) as pool:
            results = pool.map(_worker, jobs, chunksize=1)
    results.sort(key=lambda r: r.sort_key())
    return results


def results_csv_bytes(results):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in sorted(results, key=lambda r: r.sort_key()):
        if r.failure:
            continue
        writer.writerow(result_to_csv_row(r))
    return buf.getvalue().encode()


def _cell_key(r):
    return (r.scenario, r.defense, r.attack, r.n_uavs, r.sim_time, r.malicious_ratio, r.t_s)


def aggregate_cells(results):
    """Per-cell mean and stddev of each metric across seeds."""
    cells = defaultdict(list)
    for r in results:
        if not r.failure:
            cells[_cell_key(r)].append(r)
    rows = []
    for key in sorted(cells):
        runs = cells[key]
        row = {"scenario": key[0], "defense": key[1], "attack": key[2],
               "n_uavs": key[3], "sim_time": key[4],
               "malicious_ratio": key[5], "t_s": key[6], "n_seeds": len(runs)}
        for metric in ("fpr", "fnr", "dr"):
            vals = [getattr(r, metric) for r in runs if getattr(r, metric) is not None]
            row[f"{metric}_mean"] = sum(vals) / len(vals) if vals else None
            if len(vals) > 1:
                m = row[f"{metric}_mean"]
                row[f"{metric}_std"] = (sum((v - m) ** 2 for v in vals) / (len(vals) - 1)) ** 0.5
            else:
                row[f"{metric}_std"] = 0.0 if vals else None
        pairs = [(r.received, r.sent) for r in runs if r.sent > 0]
        row["pdr_mean"] = pdr_mean(pairs) if pairs else None
        row["pdr_eq8"] = pdr_grand_ratio(pairs) if pairs else None
        rows.append(row)
    return rows


def summary_csv_bytes(results):
    """Average of every metric per (defense, attack) block, one row per cell group."""
    rows = aggregate_cells(results)
    cols = ["scenario", "defense", "attack", "n_uavs", "sim_time", "malicious_ratio",
            "t_s", "n_seeds", "dr_mean", "dr_std", "fnr_mean", "fnr_std",
            "fpr_mean", "fpr_std", "pdr_mean", "pdr_eq8"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)

    def fmt(v):
        if v is None:
            return "na"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in cols])
    # overall per-defense averages, mirroring the headline comparison table
    blocks = defaultdict(list)
    for row in rows:
        blocks[(row["scenario"], row["defense"], row["attack"])].append(row)
    for key in sorted(blocks):
        group = blocks[key]
        out = {"scenario": key[0], "defense": key[1], "attack": key[2],
               "n_uavs": "all", "sim_time": "all", "malicious_ratio": "all",
               "t_s": "all", "n_seeds": sum(g["n_seeds"] for g in group)}
        for metric in ("dr_mean", "fnr_mean", "fpr_mean", "pdr_mean", "pdr_eq8"):
            vals = [g[metric] for g in group if g[metric] is not None]
            out[metric] = sum(vals) / len(vals) if vals else None
        out["dr_std"] = out["fnr_std"] = out["fpr_std"] = None
        writer.writerow([fmt(out.get(c)) for c in cols])
    return buf.getvalue().encode()


def _plot_bytes(results, metric, x_field):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "uavids"

    rows = aggregate_cells(results)
    series = defaultdict(list)
    for row in rows:
        key = f"{row['defense']}/{row['attack']}"
        val = row.get("pdr_mean" if metric == "pdr" else f"{metric}_mean")
        if val is not None:
            series[key].append((row[x_field], val))

    fig, ax = plt.subplots(figsize=(6, 4))
    for key in sorted(series):
        pts = sorted(series[key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=key)
    ax.set_xlabel(x_field)
    ax.set_ylabel(f"{metric} (%)")
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend(fontsize=8)
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def emit_outputs(results, out_dir, make_plots=True):
    """Write results.csv, summary.csv and per-metric SVG plots; returns paths."""
    if not results:
        raise ValueError("no results to emit")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "wb") as fh:
        fh.write(results_csv_bytes(results))
    paths.append(results_path)

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "wb") as fh:
        fh.write(summary_csv_bytes(results))
    paths.append(summary_path)

    if make_plots:
        # x axis: whichever swept variable actually varies
        values = {r.malicious_ratio for r in results if not r.failure}
        x_field = "malicious_ratio" if len(values) > 1 else (
            "sim_time" if len({r.sim_time for r in results if not r.failure}) > 1 else "malicious_ratio")
        for metric in PLOT_METRICS:
            plot_path = os.path.join(out_dir, f"{metric}.svg")
            with open(plot_path, "wb") as fh:
                fh.write(_plot_bytes(results, metric, x_field))
            paths.append(plot_path)
    return paths


def write_decision_log(world, path):
    """Per-epoch decision log CSV for one run (route vetting trail)."""
    cols = ["time", "flow", "epoch", "path", "p_m", "probe_pattern", "uav_sr", "status"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in world.decision_rows:
            writer.writerow([
                f"{row['time']:.3f}", row["flow"], row["epoch"], row["path"],
                f"{row['p_m']:.1f}", row["probe_pattern"],
                "" if row["uav_sr"] is None else f"{row['uav_sr']:.6f}", row["status"],
            ])
