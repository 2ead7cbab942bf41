"""Horizon-generalization benchmarks.

A sweep trains ``repeats`` genomes per training horizon, evaluates each with
an uncapped policy until failure or a hard safety limit, and aggregates the
resulting lifespans. Evaluations that hit the safety limit are "censored"
(evidence of indefinite stability): they are excluded from the mean/std and
from the lifespan-vs-horizon linear fit, and reported as a fraction instead.
The report is an exact function of the raw data table and can be regenerated
from the CSV alone.
"""

from __future__ import annotations

import csv
import json
import os
import dataclasses
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, TOOL_VERSION, config_hash
from .environment import HorizonPolicy, make_env, run_episode
from .evolution import train
from .genome import Genome, save_genome
from .network import PlasticNetwork, layout_for

RAW_COLUMNS = ("rule", "backend", "topology", "horizon", "repeat",
               "eval_index", "lifespan", "censored")


@dataclass(frozen=True)
class SweepSpec:
    rule: str
    backend: str
    topology: str  # "feedforward" | "recurrent"
    horizons: tuple
    repeats: int
    eval_episodes: int
    safety_limit: int

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "SweepSpec":
        return cls(rule=cfg.plasticity.rule,
                   backend=cfg.network.backend,
                   topology="recurrent" if cfg.network.recurrent else "feedforward",
                   horizons=tuple(int(h) for h in cfg.bench.horizons),
                   repeats=cfg.bench.repeats,
                   eval_episodes=cfg.bench.eval_episodes,
                   safety_limit=cfg.bench.safety_limit)


def fit_linear(points) -> tuple:
    """Ordinary least squares (slope, intercept) for a list of (x, y) pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("linear fit needs at least two points")
    x, y = pts[:, 0], pts[:, 1]
    if np.all(x == x[0]):
        raise ValueError("linear fit needs at least two distinct x values")
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    return slope, float(ym - slope * xm)


@dataclass
class RewardCurve:
    """Cumulative reward per step of one long rollout, with the training
    horizon annotated."""

    cumulative: np.ndarray
    horizon_marker: int
    eval_length: int
    truncated: bool  # terminal before the horizon marker


def reward_accumulation(genome: Genome, cfg: RunConfig, horizon_marker: int,
                        eval_length: int, seed: int) -> RewardCurve:
    if eval_length < horizon_marker:
        raise ValueError("eval_length must be >= horizon_marker")
    env = make_env(cfg.environment)
    net = PlasticNetwork(genome, cfg)
    trace = run_episode(net, env, HorizonPolicy.capped(eval_length), seed,
                        record="rewards")
    return RewardCurve(cumulative=trace.cumulative,
                       horizon_marker=int(horizon_marker),
                       eval_length=int(eval_length),
                       truncated=trace.length < horizon_marker)


def _cell_seed(base: int, horizon: int, repeat: int) -> int:
    return int(np.random.default_rng([0xB__E, base, horizon, repeat]).integers(2 ** 31))


def _eval_seed(base: int, horizon: int, repeat: int, episode: int) -> int:
    return int(np.random.default_rng([0xE__A, base, horizon, repeat, episode])
               .integers(2 ** 31))


def run_cell(cfg: RunConfig, horizon: int, repeat: int,
             workers: int | None = None) -> dict:
    """Train one genome at ``horizon`` and evaluate it uncapped."""
    es = dataclasses.replace(
        cfg.es, horizon=int(horizon),
        seed=_cell_seed(cfg.es.seed, horizon, repeat),
        target_fitness=(cfg.es.target_fitness if cfg.es.target_fitness is not None
                        else 0.975 * horizon))
    cell_cfg = dataclasses.replace(cfg, es=es)
    result = train(cell_cfg, out_dir=None, workers=workers)
    best_ever = max((row[2] for row in result.history), default=0.0)
    status = "ok" if best_ever > 0 else "plateau"

    env = make_env(cfg.environment)
    policy = HorizonPolicy.uncapped(cfg.bench.safety_limit)
    lifespans = []
    censored = []
    for episode in range(cfg.bench.eval_episodes):
        net = PlasticNetwork(result.genome, cell_cfg)
        trace = run_episode(net, env, policy,
                            _eval_seed(cfg.es.seed, horizon, repeat, episode),
                            record="none")
        lifespans.append(float(trace.lifespan))
        censored.append(bool(trace.censored))
    return {
        "horizon": int(horizon),
        "repeat": int(repeat),
        "status": status,
        "generations_run": result.generations_run,
        "final_mean_fitness": result.history[-1][1] if result.history else 0.0,
        "train_seconds": round(result.elapsed_seconds, 3),
        "lifespans": lifespans,
        "censored": censored,
        "theta": result.genome.theta,
    }


def cell_rows(spec: SweepSpec, cell: dict) -> list:
    rows = []
    for idx, (life, cens) in enumerate(zip(cell["lifespans"], cell["censored"])):
        rows.append({"rule": spec.rule, "backend": spec.backend,
                     "topology": spec.topology, "horizon": cell["horizon"],
                     "repeat": cell["repeat"], "eval_index": idx,
                     "lifespan": life, "censored": int(cens)})
    return rows


def aggregate(spec: SweepSpec, rows: list, cells_meta: list | None = None) -> dict:
    """Build the sweep report from the raw data table (pure; re-runnable)."""
    horizons = []
    points = []
    excluded = []
    for horizon in spec.horizons:
        sub = [r for r in rows if int(r["horizon"]) == horizon]
        if not sub:
            continue
        lifespans = np.array([float(r["lifespan"]) for r in sub])
        cens = np.array([bool(int(r["censored"])) for r in sub])
        uncensored = lifespans[~cens]
        entry = {
            "horizon": horizon,
            "n_evaluations": int(len(sub)),
            "n_censored": int(cens.sum()),
            "censored_fraction": float(cens.mean()),
            "mean_lifespan": float(uncensored.mean()) if uncensored.size else None,
            "std_lifespan": float(uncensored.std()) if uncensored.size else None,
        }
        horizons.append(entry)
        if uncensored.size:
            points.append((horizon, float(uncensored.mean())))
        else:
            excluded.append(horizon)
    distinct_x = len({p[0] for p in points})
    if distinct_x >= 2:
        slope, intercept = fit_linear(points)
        regression = {"applicable": True, "A": slope, "B": intercept,
                      "n_points": len(points), "excluded_horizons": excluded}
    else:
        regression = {"applicable": False, "A": None, "B": None,
                      "n_points": len(points), "excluded_horizons": excluded}
    report = {
        "tool_version": TOOL_VERSION,
        "spec": dataclasses.asdict(spec),
        "horizons": horizons,
        "regression": regression,
        "n_rows": len(rows),
    }
    if cells_meta is not None:
        report["cells"] = cells_meta
    return report


def write_raw_csv(path, rows: list, meta: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.DictWriter(fh, fieldnames=list(RAW_COLUMNS))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in RAW_COLUMNS})


def read_raw_csv(path) -> tuple:
    """Read a raw sweep table; returns (rows, header_meta)."""
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line.lstrip("# ").partition("=")
                meta[key] = value
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(dict(zip(header, line.split(","))))
    for row in rows:
        row["horizon"] = int(row["horizon"])
        row["repeat"] = int(row["repeat"])
        row["eval_index"] = int(row["eval_index"])
        row["lifespan"] = float(row["lifespan"])
        row["censored"] = int(row["censored"])
    return rows, meta


def write_series_csv(path, report: dict) -> None:
    """Plot-ready (horizon, mean_lifespan) pairs for the uncensored means."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("horizon,mean_lifespan\n")
        for entry in report["horizons"]:
            if entry["mean_lifespan"] is not None:
                fh.write(f"{entry['horizon']},{entry['mean_lifespan']}\n")


def run_sweep(cfg: RunConfig, out_dir, workers: int | None = None,
              progress=None) -> dict:
    """Full sweep with per-cell completion markers (resumable).

    Returns the report dict; writes raw.csv, report.json, series CSV, and
    per-cell genomes under ``out_dir``.
    """
    cfg.validate()
    spec = SweepSpec.from_config(cfg)
    cfg_hash = config_hash(cfg)
    cells_dir = os.path.join(out_dir, "cells")
    os.makedirs(cells_dir, exist_ok=True)

    rows = []
    cells_meta = []
    failures = 0
    total = 0
    for horizon in spec.horizons:
        for repeat in range(spec.repeats):
            total += 1
            name = f"h{horizon}_r{repeat}"
            marker = os.path.join(cells_dir, f"{name}.json")
            if os.path.exists(marker):
                with open(marker, "r", encoding="utf-8") as fh:
                    cell = json.load(fh)
                if cell.get("config_hash") == cfg_hash:
                    rows.extend(cell["rows"])
                    cells_meta.append(cell["meta"])
                    continue
            if progress is not None:
                progress(name)
            try:
                cell = run_cell(cfg, horizon, repeat, workers=workers)
            except Exception as exc:  # cell failure is recorded, not fatal
                failures += 1
                cells_meta.append({"horizon": horizon, "repeat": repeat,
                                   "status": f"failed: {exc}"})
                continue
            theta = cell.pop("theta")
            save_genome(os.path.join(cells_dir, f"{name}_genome.json"),
                        Genome(theta, layout_for(cfg)), cfg_hash,
                        extra={"horizon": horizon, "repeat": repeat})
            new_rows = cell_rows(spec, cell)
            meta = {k: cell[k] for k in ("horizon", "repeat", "status",
                                         "generations_run", "final_mean_fitness",
                                         "train_seconds")}
            with open(marker, "w", encoding="utf-8") as fh:
                json.dump({"config_hash": cfg_hash, "rows": new_rows, "meta": meta},
                          fh, sort_keys=True)
            rows.extend(new_rows)
            cells_meta.append(meta)

    report = aggregate(spec, rows, cells_meta)
    report["config_hash"] = cfg_hash
    report["failed_cells"] = failures
    report["total_cells"] = total
    write_raw_csv(os.path.join(out_dir, "raw.csv"), rows,
                  meta={"config_hash": cfg_hash, "tool_version": TOOL_VERSION})
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    write_series_csv(os.path.join(out_dir, "series_mean_lifespan.csv"), report)
    return report
