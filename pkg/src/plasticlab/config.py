"""Run configuration: dataclasses, strict YAML loading, and config hashing.

A run is described by one flat YAML document with sections ``environment``,
``network``, ``neuron``, ``plasticity``, ``es``, ``bench`` and an optional
``output_dir``. Unknown keys anywhere are rejected so that a config file is an
exact, reproducible record of a run.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError

TOOL_VERSION = "0.1.0"

MAX_SAFETY_LIMIT = 10_000_000

RULES = ("none", "hebbian", "oja", "abcd", "stdp")
BACKENDS = ("ann", "snn")
SHAPINGS = ("raw", "rank")
INTEGRATIONS = ("euler", "exact")
WEIGHT_DEPENDENCE = ("none", "soft-bounds")
DECODERS = ("argmax", "affine")


@dataclass(frozen=True)
class EnvConfig:
    name: str = "cartpole"
    seed: int = 0
    # cart-pole constants (ignored by other environments)
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force: float = 10.0
    dt: float = 0.02
    theta_limit_deg: float = 12.0
    x_limit: float = 2.4
    init_range: float = 0.05

    def validate(self) -> None:
        if self.name not in ("cartpole", "constant"):
            raise ConfigError(f"environment.name: unknown environment {self.name!r}")
        for key in ("gravity", "cart_mass", "pole_mass", "half_length", "force",
                    "dt", "theta_limit_deg", "x_limit"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"environment.{key}: must be > 0")
        if self.init_range < 0:
            raise ConfigError("environment.init_range: must be >= 0")


@dataclass(frozen=True)
class NetworkConfig:
    backend: str = "ann"
    hidden: tuple = (32, 32)
    recurrent: bool = False

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"network.backend: must be one of {BACKENDS}")
        if len(self.hidden) == 0:
            raise ConfigError("network.hidden: at least one hidden layer required")
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("network.hidden: layer sizes must be >= 1")


@dataclass(frozen=True)
class NeuronConfig:
    tau_m: float = 10.0
    r_m: float = 1.0
    v_rest: float = 0.0
    v_th: float = 1.0
    leaky: bool = True
    integration: str = "euler"
    internal_steps: int = 10
    encode_gain: float = 1.0
    decode: str = "argmax"

    def validate(self) -> None:
        if self.tau_m <= 0:
            raise ConfigError("neuron.tau_m: must be > 0")
        if self.v_th <= self.v_rest:
            raise ConfigError("neuron.v_th: must be > neuron.v_rest")
        if self.integration not in INTEGRATIONS:
            raise ConfigError(f"neuron.integration: must be one of {INTEGRATIONS}")
        if self.internal_steps < 1:
            raise ConfigError("neuron.internal_steps: must be >= 1")
        if self.encode_gain <= 0:
            raise ConfigError("neuron.encode_gain: must be > 0")
        if self.decode not in DECODERS:
            raise ConfigError(f"neuron.decode: must be one of {DECODERS}")


@dataclass(frozen=True)
class PlasticityConfig:
    rule: str = "oja"
    w_min: float = -3.0
    w_max: float = 3.0
    tau_plus: float = 10.0
    tau_minus: float = 10.0
    weight_dependence: str = "soft-bounds"
    trace_decay: str = "euler"

    def validate(self) -> None:
        if self.rule not in RULES:
            raise ConfigError(f"plasticity.rule: must be one of {RULES}")
        if not self.w_min < self.w_max:
            raise ConfigError("plasticity.w_min: must be < plasticity.w_max")
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ConfigError("plasticity.tau_plus/tau_minus: must be > 0")
        if self.weight_dependence not in WEIGHT_DEPENDENCE:
            raise ConfigError(
                f"plasticity.weight_dependence: must be one of {WEIGHT_DEPENDENCE}")
        if self.trace_decay not in INTEGRATIONS:
            raise ConfigError(f"plasticity.trace_decay: must be one of {INTEGRATIONS}")


@dataclass(frozen=True)
class EsConfig:
    population: int = 128
    sigma: float = 0.1
    learning_rate: float = 0.03
    generations: int = 300
    seed: int = 0
    fitness_shaping: str = "rank"
    antithetic: bool = True
    horizon: int = 200
    init_scale: float = 0.0
    target_fitness: float | None = None
    patience: int = 1
    checkpoint_every: int = 50

    def validate(self) -> None:
        if self.population < 2:
            raise ConfigError("es.population: must be >= 2")
        if self.antithetic and self.population % 2 != 0:
            raise ConfigError("es.population: must be even when es.antithetic is true")
        if self.sigma <= 0:
            raise ConfigError("es.sigma: must be > 0")
        if self.learning_rate <= 0:
            raise ConfigError("es.learning_rate: must be > 0")
        if self.generations < 0:
            raise ConfigError("es.generations: must be >= 0")
        if self.fitness_shaping not in SHAPINGS:
            raise ConfigError(f"es.fitness_shaping: must be one of {SHAPINGS}")
        if self.horizon < 1:
            raise ConfigError("es.horizon: must be >= 1")
        if self.init_scale < 0:
            raise ConfigError("es.init_scale: must be >= 0")
        if self.patience < 1:
            raise ConfigError("es.patience: must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("es.checkpoint_every: must be >= 1")


@dataclass(frozen=True)
class BenchConfig:
    horizons: tuple = (100, 200, 400, 800)
    repeats: int = 3
    eval_episodes: int = 10
    safety_limit: int = 100_000

    def validate(self) -> None:
        if len(self.horizons) == 0:
            raise ConfigError("bench.horizons: must be non-empty")
        hs = [int(h) for h in self.horizons]
        if any(b <= a for a, b in zip(hs, hs[1:])):
            raise ConfigError("bench.horizons: must be strictly increasing")
        if hs[0] < 1:
            raise ConfigError("bench.horizons: must be >= 1")
        if self.repeats < 1:
            raise ConfigError("bench.repeats: must be >= 1")
        if self.eval_episodes < 1:
            raise ConfigError("bench.eval_episodes: must be >= 1")
        if not 1 <= self.safety_limit <= MAX_SAFETY_LIMIT:
            raise ConfigError(
                f"bench.safety_limit: must be in [1, {MAX_SAFETY_LIMIT}]")


@dataclass(frozen=True)
class RunConfig:
    environment: EnvConfig = field(default_factory=EnvConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    plasticity: PlasticityConfig = field(default_factory=PlasticityConfig)
    es: EsConfig = field(default_factory=EsConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    output_dir: str | None = None

    def validate(self) -> None:
        for section in ("environment", "network", "neuron", "plasticity", "es", "bench"):
            getattr(self, section).validate()
        if self.network.backend == "ann" and self.plasticity.rule == "stdp":
            raise ConfigError(
                "plasticity.rule: stdp requires network.backend = snn "
                "(spike timing is undefined for the real-valued backend)")


_SECTIONS = {
    "environment": EnvConfig,
    "network": NetworkConfig,
    "neuron": NeuronConfig,
    "plasticity": PlasticityConfig,
    "es": EsConfig,
    "bench": BenchConfig,
}

_COERCIBLE = {int: (int,), float: (int, float), str: (str,), bool: (bool,)}


def _coerce(value, ftype, path):
    # YAML gives python scalars/lists; normalize to the dataclass field types.
    if ftype == "tuple":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list")
        return tuple(value)
    if ftype in ("float | None", "int | None", "str | None"):
        if value is None:
            return None
        ftype = ftype.split(" ")[0]
    target = {"int": int, "float": float, "str": str, "bool": bool}.get(ftype)
    if target is None:
        return value
    if target is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if target is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if not isinstance(value, _COERCIBLE[target]):
        raise ConfigError(f"{path}: expected {target.__name__}")
    if target is float and isinstance(value, float) and not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    return target(value)


def _build_section(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name in data:
            kwargs[name] = _coerce(data[name], f.type, f"{path}.{name}")
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    """Build and validate a RunConfig from a plain nested dict."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = sorted(set(data) - set(_SECTIONS) - {"output_dir"})
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build_section(cls, data[name], name)
    if "output_dir" in data and data["output_dir"] is not None:
        kwargs["output_dir"] = _coerce(data["output_dir"], "str", "output_dir")
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    """Load, validate and return the run config at ``path``."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.MarkedYAMLError as exc:  # carries line/column of the problem
        mark = exc.problem_mark
        where = f"line {mark.line + 1}" if mark is not None else "unknown location"
        raise ConfigError(f"{path}: invalid YAML at {where}: {exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        data = {}
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def dump_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


def config_hash(cfg: RunConfig) -> str:
    """Stable hash of the fully-resolved config; embedded in every output file."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def default_config() -> RunConfig:
    return RunConfig()
