"""Command-line entry point: train, evaluate, sweep, report.

Exit codes: 0 success, 1 runtime failure, 2 config error; a sweep in which
some (but not all) cells failed exits 3. All outputs embed the config hash
and tool version so artifacts can be traced to the exact run that made them.
The worker-pool size comes from --workers, else the PLASTICLAB_WORKERS
environment variable, else the CPU count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import bench
from .config import TOOL_VERSION, config_hash, dump_config, load_config
from .environment import HorizonPolicy, make_env, run_episode, write_trace_csv
from .errors import ConfigError, GenomeFormatError
from .evolution import check_genome_compatible, train
from .genome import load_genome
from .network import PlasticNetwork
from .neuron import write_raster_csv


def _add_workers(parser):
    parser.add_argument("--workers", type=int, default=None,
                        help="worker pool size (default: $PLASTICLAB_WORKERS or CPU count)")


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir or "run"
    os.makedirs(out_dir, exist_ok=True)
    dump_config(cfg, os.path.join(out_dir, "config.used.yaml"))

    def progress(gen, row):
        if not args.quiet:
            print(f"gen {row[0]:4d}  mean {row[1]:10.2f}  max {row[2]:10.2f}  "
                  f"min {row[3]:10.2f}", flush=True)

    result = train(cfg, out_dir=out_dir, workers=args.workers, progress=progress)
    print(f"trained {result.generations_run} generations in "
          f"{result.elapsed_seconds:.1f}s -> {out_dir}/genome.json")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    genome, meta = load_genome(args.genome)
    check_genome_compatible(meta, cfg, force=args.force)
    if args.uncapped:
        policy = HorizonPolicy.uncapped(cfg.bench.safety_limit)
    else:
        policy = HorizonPolicy.capped(args.horizon)
    out_dir = args.out or "evaluation"
    os.makedirs(out_dir, exist_ok=True)
    env = make_env(cfg.environment)
    file_meta = {"config_hash": config_hash(cfg), "tool_version": TOOL_VERSION}

    lifespans, lengths, censored = [], [], []
    for episode in range(args.episodes):
        net = PlasticNetwork(genome, cfg)
        if args.raster and cfg.network.backend == "snn":
            net.record_spikes = True
        seed = args.seed + episode
        trace = run_episode(net, env, policy, seed, record="rewards")
        write_trace_csv(trace, os.path.join(out_dir, f"trace_ep{episode:03d}.csv"),
                        meta={**file_meta, "seed": seed})
        if net.record_spikes:
            write_raster_csv(net.spike_events,
                             os.path.join(out_dir, f"raster_ep{episode:03d}.csv"),
                             meta={**file_meta, "seed": seed})
        lifespans.append(trace.lifespan)
        lengths.append(trace.length)
        censored.append(trace.censored)
        print(f"episode {episode}: lifespan {trace.lifespan:.0f}"
              f"{' (censored)' if trace.censored else ''}")

    summary = {
        **file_meta,
        "episodes": args.episodes,
        "mean_lifespan": float(np.mean(lifespans)),
        "mean_reward": float(np.mean(lifespans)),
        "mean_length": float(np.mean(lengths)),
        "censored_count": int(sum(censored)),
        "policy": "uncapped" if args.uncapped else f"horizon {args.horizon}",
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"mean lifespan {summary['mean_lifespan']:.1f} over {args.episodes} episodes "
          f"({summary['censored_count']} censored) -> {out_dir}/summary.json")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg.output_dir or "sweep"
    os.makedirs(out_dir, exist_ok=True)
    dump_config(cfg, os.path.join(out_dir, "config.used.yaml"))

    def progress(cell):
        if not args.quiet:
            print(f"running cell {cell}", flush=True)

    report = bench.run_sweep(cfg, out_dir, workers=args.workers, progress=progress)
    reg = report["regression"]
    if reg["applicable"]:
        print(f"lifespan = {reg['A']:.4f} * horizon + {reg['B']:.4f} "
              f"({reg['n_points']} points)")
    else:
        print("linear fit not applicable (fewer than two uncensored horizons)")
    print(f"report -> {out_dir}/report.json")
    if report["failed_cells"]:
        return 1 if report["failed_cells"] == report["total_cells"] else 3
    return 0


def cmd_report(args) -> int:
    rows, meta = bench.read_raw_csv(args.raw_csv)
    cfg = load_config(args.config) if args.config else None
    if cfg is not None:
        spec = bench.SweepSpec.from_config(cfg)
    else:
        # rebuild the spec footprint from the table itself
        if not rows:
            raise GenomeFormatError("raw table is empty and no config given")
        horizons = tuple(sorted({r["horizon"] for r in rows}))
        spec = bench.SweepSpec(rule=rows[0]["rule"], backend=rows[0]["backend"],
                               topology=rows[0]["topology"], horizons=horizons,
                               repeats=1 + max(r["repeat"] for r in rows),
                               eval_episodes=1 + max(r["eval_index"] for r in rows),
                               safety_limit=int(max(r["lifespan"] for r in rows)))
    report = bench.aggregate(spec, rows)
    if "config_hash" in meta:
        report["config_hash"] = meta["config_hash"]
    out = args.out or "report.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"report -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plasticlab",
        description="Evolve plastic ANN/SNN controllers and benchmark their "
                    "generalization beyond the training time horizon.")
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a genome from a run config")
    p.add_argument("config")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--quiet", action="store_true")
    _add_workers(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a saved genome")
    p.add_argument("genome")
    p.add_argument("--config", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--uncapped", action="store_true",
                      help="no horizon cap (stops at bench.safety_limit)")
    mode.add_argument("--horizon", type=int, default=None)
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true",
                   help="evaluate even if the genome's config hash differs")
    p.add_argument("--raster", action="store_true",
                   help="dump spike rasters (snn backend only)")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the horizon sweep from a run config")
    p.add_argument("config")
    p.add_argument("-o", "--out", default=None)
    p.add_argument("--quiet", action="store_true")
    _add_workers(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="regenerate a sweep report from raw.csv")
    p.add_argument("raw_csv")
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (GenomeFormatError, RuntimeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
