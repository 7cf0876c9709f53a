"""Command-line interface: run scenarios, validate configs, emit plots.

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

import argparse
import csv
import os
import sys

from .harness import emit_outputs, run_matrix, run_single, write_decision_log
from .metrics import RunResult
from .scenario import (PRESET_NAMES, ConfigError, load_scenario, preset,
                       save_scenario, write_reference_scenario)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUN = 2


def _resolve_scenario(spec):
    if spec in PRESET_NAMES:
        return preset(spec)
    return load_scenario(spec)


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.seeds is not None:
        cfg.seeds = list(range(args.seeds))
    if args.ts is not None:
        cfg.t_s = args.ts
        cfg.sweep.pop("t_s", None)
    if args.attack is not None:
        cfg.attack = args.attack
        cfg.attack_mix = None
        cfg.sweep.pop("attack", None)
    if args.defense is not None:
        cfg.defense = args.defense
        cfg.sweep.pop("defense", None)
    if args.malicious_ratio is not None:
        cfg.malicious_ratio = args.malicious_ratio
        cfg.sweep.pop("malicious_ratio", None)
    cfg.validate()
    return cfg


def cmd_run(args):
    cfg = _apply_overrides(_resolve_scenario(args.scenario), args)
    results = run_matrix(cfg, parallelism=args.parallelism)
    failures = [r for r in results if r.failure]
    for f in failures:
        print(f"run failed: scenario={f.scenario} seed={f.seed} "
              f"ratio={f.malicious_ratio} defense={f.defense}: {f.failure}", file=sys.stderr)
    paths = emit_outputs(results, args.out, make_plots=not args.no_plots)
    if args.decision_log:
        cell = _apply_overrides(_resolve_scenario(args.scenario), args)
        cell.sweep = {}
        _, world = run_single(cell, cfg.seeds[0], record_decisions=True)
        log_path = os.path.join(args.out, "decisions.csv")
        write_decision_log(world, log_path)
        paths.append(log_path)
    for p in paths:
        print(p)
    ok = len(results) - len(failures)
    print(f"{ok}/{len(results)} runs succeeded")
    return EXIT_RUN if failures else EXIT_OK


def cmd_validate(args):
    cfg = _resolve_scenario(args.scenario)
    cfg.validate()
    cells = 1
    for values in cfg.sweep.values():
        cells *= len(values)
    print(f"{cfg.name}: valid ({cells} cell(s) x {len(cfg.seeds)} seed(s))")
    return EXIT_OK


def cmd_presets(args):
    if args.write_reference:
        write_reference_scenario(args.write_reference)
        print(args.write_reference)
        return EXIT_OK
    if args.emit:
        cfg = preset(args.emit)
        out = args.out or f"{args.emit}.yaml"
        save_scenario(cfg, out)
        print(out)
        return EXIT_OK
    for name in PRESET_NAMES:
        cfg = preset(name)
        print(f"{name}: {cfg.n_uavs} UAVs, {cfg.sim_time:.0f}s, "
              f"region {cfg.region_x:.0f}x{cfg.region_y:.0f}x{cfg.region_z:.0f} m, "
              f"sweep {cfg.sweep or '-'}")
    return EXIT_OK


def cmd_plot(args):
    results = []
    with open(args.results) as fh:
        for row in csv.DictReader(fh):
            def fval(key):
                return None if row[key] == "na" else float(row[key])
            results.append(RunResult(
                scenario=row["scenario"], defense=row["defense"], seed=int(row["seed"]),
                n_uavs=int(row["n_uavs"]), sim_time=float(row["sim_time"]),
                malicious_ratio=float(row["malicious_ratio"]), t_s=float(row["t_s"]),
                attack=row["attack"], fpr=fval("fpr"), fnr=fval("fnr"), dr=fval("dr"),
                sent=int(row["sent"]), received=int(row["received"]),
            ))
    if not results:
        print("results file has no rows", file=sys.stderr)
        return EXIT_CONFIG
    paths = emit_outputs(results, args.out, make_plots=True)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="uavids", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a scenario matrix and emit outputs")
    run_p.add_argument("--scenario", default="desk",
                       help=f"preset name ({', '.join(PRESET_NAMES)}) or a YAML file path")
    run_p.add_argument("--seed", type=int, help="run a single master seed")
    run_p.add_argument("--seeds", type=int, help="run seeds 0..N-1")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--parallelism", type=int, default=max(1, (os.cpu_count() or 1)),
                       help="concurrent worker processes")
    run_p.add_argument("--ts", type=float, help="surveillance threshold override")
    run_p.add_argument("--attack", choices=["mixed", "wh", "bh", "gh", "fid"],
                       help="attack mix override")
    run_p.add_argument("--defense", choices=["suas-his", "none"], help="defense override")
    run_p.add_argument("--malicious-ratio", type=float, help="malicious ratio override")
    run_p.add_argument("--no-plots", action="store_true", help="skip SVG plot emission")
    run_p.add_argument("--decision-log", action="store_true",
                       help="also write a per-epoch route vetting log for the first seed")
    run_p.set_defaults(fn=cmd_run)

    val_p = sub.add_parser("validate", help="validate a scenario file or preset")
    val_p.add_argument("scenario")
    val_p.set_defaults(fn=cmd_validate)

    pre_p = sub.add_parser("presets", help="list presets or emit one as YAML")
    pre_p.add_argument("--emit", choices=PRESET_NAMES, help="write the named preset")
    pre_p.add_argument("--out", help="output path for --emit")
    pre_p.add_argument("--write-reference", metavar="PATH",
                       help="write a reference scenario documenting every key")
    pre_p.set_defaults(fn=cmd_presets)

    plot_p = sub.add_parser("plot", help="regenerate plots from a results.csv")
    plot_p.add_argument("results")
    plot_p.add_argument("--out", default="out", help="output directory")
    plot_p.set_defaults(fn=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
