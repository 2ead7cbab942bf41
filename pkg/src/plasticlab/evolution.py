"""Evolution Strategies over flat genomes with deterministic seeded noise.

Each generation samples N Gaussian perturbations v_i of the current parameter
vector, evaluates every individual p_i = theta + v_i over one capped episode,
and applies

    theta <- theta + alpha * (1 / (N * sigma^2)) * sum_i v_i * r_i

where r_i is either the raw episode reward or a tie-averaged centered rank in
[-0.5, 0.5]. Noise is a pure function of (seed, generation, individual), so
workers regenerate it locally and results are identical regardless of the
worker count, and antithetic mode emits exact +-v pairs.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .config import EsConfig, RunConfig, TOOL_VERSION, config_hash
from .environment import HorizonPolicy, make_env, run_episode
from .errors import GenomeFormatError
from .genome import Genome, GenomeLayout, save_genome
from .network import PlasticNetwork, layout_for

_NOISE_TAG = 0x5E5
_ENV_TAG = 0xE27
_INIT_TAG = 0x171


@dataclass
class FitnessRecord:
    index: int
    reward: float
    episode_length: int
    seed: int
    aborted: bool = False


def _noise_rng(seed: int, gen: int, pair: int) -> np.random.Generator:
    return np.random.default_rng([_NOISE_TAG, seed, gen, pair])


def generation_env_seed(cfg: EsConfig, gen: int) -> int:
    """One environment seed per generation, shared across the population."""
    return int(np.random.default_rng([_ENV_TAG, cfg.seed, gen]).integers(2 ** 31))


def sample_noise(cfg: EsConfig, gen: int, index: int, size: int) -> np.ndarray:
    """Noise vector v_i for one individual; antithetic pairs share a draw."""
    if cfg.antithetic:
        base = _noise_rng(cfg.seed, gen, index // 2).standard_normal(size)
        v = cfg.sigma * base
        return v if index % 2 == 0 else -v
    return cfg.sigma * _noise_rng(cfg.seed, gen, index).standard_normal(size)


def sample_population(theta: np.ndarray, cfg: EsConfig, gen: int) -> list:
    """Perturbed parameter vectors p_i = theta + v_i for one generation."""
    return [theta + sample_noise(cfg, gen, i, theta.size)
            for i in range(cfg.population)]


def shape_rewards(rewards: np.ndarray, mode: str) -> np.ndarray:
    if mode == "raw":
        return np.asarray(rewards, dtype=float)
    if mode == "rank":
        r = np.asarray(rewards, dtype=float)
        if r.size == 1:
            return np.zeros(1)
        ranks = rankdata(r, method="average")  # ties share the mean rank
        return (ranks - 1.0) / (r.size - 1.0) - 0.5
    raise ValueError(f"unknown fitness shaping {mode!r}")


def es_update(theta: np.ndarray, noises, rewards, cfg: EsConfig) -> np.ndarray:
    """One parameter update; rewards are shaped per cfg.fitness_shaping."""
    n = len(noises)
    if n != len(rewards):
        raise ValueError(f"{n} noise vectors but {len(rewards)} rewards")
    shaped = shape_rewards(np.asarray(rewards, dtype=float), cfg.fitness_shaping)
    grad = np.zeros_like(theta)
    for v, r in zip(noises, shaped):
        grad += v * r
    return theta + cfg.learning_rate * grad / (n * cfg.sigma ** 2)


def initial_theta(layout: GenomeLayout, cfg: EsConfig) -> np.ndarray:
    """Zero vector, or seeded Gaussian initial weights when init_scale > 0.

    Only weight segments are randomized; rate/coeff segments always start at
    zero so plasticity begins quiescent.
    """
    theta = np.zeros(layout.size)
    if cfg.init_scale > 0:
        rng = np.random.default_rng([_INIT_TAG, cfg.seed])
        parts = layout.unflatten(theta)
        for seg in layout.segments:
            values = rng.standard_normal(seg.shape)
            if seg.kind == "weight":
                parts[seg.name][:] = cfg.init_scale * values
    return theta


def evaluate_individual(genome: Genome, cfg: RunConfig, horizon, seed: int,
                        index: int = 0) -> FitnessRecord:
    """Build a network from the genome and run one capped episode."""
    policy = horizon if isinstance(horizon, HorizonPolicy) else HorizonPolicy.capped(horizon)
    env = make_env(cfg.environment)
    net = PlasticNetwork(genome, cfg)
    trace = run_episode(net, env, policy, seed, record="none")
    reward = env.min_fitness if trace.blowup else trace.lifespan
    return FitnessRecord(index=index, reward=float(reward),
                         episode_length=trace.length, seed=seed,
                         aborted=trace.blowup)


# -- parallel population evaluation -----------------------------------------

_WORKER_CTX: dict = {}


def _worker_init(cfg: RunConfig):
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["layout"] = layout_for(cfg)


def _eval_chunk(args):
    theta, gen, indices, env_seed, horizon = args
    cfg = _WORKER_CTX["cfg"]
    layout = _WORKER_CTX["layout"]
    out = []
    for i in indices:
        candidate = theta + sample_noise(cfg.es, gen, i, theta.size)
        rec = evaluate_individual(Genome(candidate, layout), cfg, horizon,
                                  env_seed, index=i)
        out.append(rec)
    return out


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("PLASTICLAB_WORKERS", "0"))
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


class PopulationEvaluator:
    """Order-stable rollout evaluation of a sampled population.

    With workers > 1 a process pool regenerates each individual's noise
    locally from (seed, generation, index); records always come back indexed
    by individual, so the worker count cannot affect results.
    """

    def __init__(self, cfg: RunConfig, workers: int | None = None):
        self.cfg = cfg
        self.workers = resolve_workers(workers)
        self._pool = None
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers,
                                             initializer=_worker_init,
                                             initargs=(cfg,))
        else:
            _worker_init(cfg)

    def __call__(self, theta: np.ndarray, gen: int) -> list:
        es = self.cfg.es
        env_seed = generation_env_seed(es, gen)
        indices = list(range(es.population))
        if self._pool is None:
            records = _eval_chunk((theta, gen, indices, env_seed, es.horizon))
        else:
            chunks = [(theta, gen, [int(i) for i in idx], env_seed, es.horizon)
                      for idx in np.array_split(indices, self.workers) if len(idx)]
            records = []
            for part in self._pool.map(_eval_chunk, chunks):
                records.extend(part)
        records.sort(key=lambda r: r.index)
        return records

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- training loop -----------------------------------------------------------

@dataclass
class TrainResult:
    genome: Genome
    history: list  # rows (generation, mean, max, min)
    generations_run: int
    reached_target: bool
    elapsed_seconds: float


def evolve(theta0: np.ndarray, evaluate, cfg: EsConfig, on_generation=None):
    """Core ES loop over an arbitrary population-evaluation callable.

    ``evaluate(theta, gen)`` returns one FitnessRecord per individual, index
    order. Returns (theta, history, generations_run, reached_target).
    """
    theta = np.array(theta0, dtype=float)
    history = []
    reached = False
    streak = 0
    gens = 0
    for gen in range(cfg.generations):
        records = evaluate(theta, gen)
        rewards = np.array([r.reward for r in records])
        noises = [sample_noise(cfg, gen, i, theta.size) for i in range(cfg.population)]
        theta = es_update(theta, noises, rewards, cfg)
        mean = float(rewards.mean())
        history.append((gen, mean, float(rewards.max()), float(rewards.min())))
        gens = gen + 1
        if on_generation is not None:
            on_generation(gen, theta, history[-1])
        if cfg.target_fitness is not None and mean >= cfg.target_fitness:
            streak += 1
            if streak >= cfg.patience:
                reached = True
                break
        else:
            streak = 0
    return theta, history, gens, reached


def quadratic_fitness(optimum: np.ndarray, cfg: EsConfig):
    """Synthetic fitness f(p) = -||p - optimum||^2 for optimizer sanity tests."""
    def evaluate(theta, gen):
        records = []
        for i in range(cfg.population):
            p = theta + sample_noise(cfg, gen, i, theta.size)
            records.append(FitnessRecord(index=i, reward=-float(np.sum((p - optimum) ** 2)),
                                         episode_length=0, seed=0))
        return records
    return evaluate


def write_history_csv(path, history, meta: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("generation,mean,max,min\n")
        for gen, mean, mx, mn in history:
            fh.write(f"{gen},{mean},{mx},{mn}\n")


def save_checkpoint(path, genome: Genome, cfg_hash: str, generation: int) -> None:
    save_genome(path, genome, cfg_hash,
                extra={"generation": generation, "kind": "checkpoint"})


def train(cfg: RunConfig, out_dir=None, workers: int | None = None,
          progress=None) -> TrainResult:
    """Full training run: sample -> evaluate (parallel) -> update, with
    periodic checkpoints and a fitness history.

    Writes genome.json, history.csv and checkpoints under ``out_dir`` when
    given. Deterministic for a fixed (config, seed): reruns produce
    byte-identical files.
    """
    cfg.validate()
    layout = layout_for(cfg)
    theta0 = initial_theta(layout, cfg.es)
    cfg_hash = config_hash(cfg)
    started = time.perf_counter()

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    def on_generation(gen, theta, row):
        if progress is not None:
            progress(gen, row)
        if out_dir is not None and (gen + 1) % cfg.es.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, f"checkpoint_gen{gen + 1:05d}.json"),
                            Genome(theta, layout), cfg_hash, gen + 1)

    with PopulationEvaluator(cfg, workers) as evaluate:
        theta, history, gens, reached = evolve(theta0, evaluate, cfg.es, on_generation)

    elapsed = time.perf_counter() - started
    genome = Genome(theta, layout)
    if out_dir is not None:
        save_genome(os.path.join(out_dir, "genome.json"), genome, cfg_hash,
                    extra={"generations": gens})
        write_history_csv(os.path.join(out_dir, "history.csv"), history,
                          meta={"config_hash": cfg_hash, "tool_version": TOOL_VERSION})
    return TrainResult(genome=genome, history=history, generations_run=gens,
                       reached_target=reached, elapsed_seconds=elapsed)


def check_genome_compatible(meta: dict, cfg: RunConfig, force: bool = False) -> None:
    """Refuse genomes created under a different config unless forced."""
    file_hash = meta.get("config_hash", "")
    current = config_hash(cfg)
    if file_hash and file_hash != current and not force:
        raise GenomeFormatError(
            f"genome was created with config hash {file_hash}, current config is "
            f"{current}; pass --force to evaluate anyway")
