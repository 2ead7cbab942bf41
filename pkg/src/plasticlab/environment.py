"""Control environments and the episode runner.

The cart-pole implementation follows the de-facto CartPole-v1 benchmark
constants (cart 1.0 kg, pole 0.1 kg, half-length 0.5 m, force +-10 N,
g = 9.8 m/s^2, explicit Euler at dt = 0.02 s, termination at |theta| > 12 deg
or |x| > 2.4 m). Episodes are run either capped at a training horizon or
uncapped with a hard safety limit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig
from .errors import NumericalBlowup


@dataclass
class EnvStep:
    observation: np.ndarray
    reward: float
    terminal: bool


@dataclass(frozen=True)
class HorizonPolicy:
    """Episode length policy: a finite training cap or uncapped-with-safety-limit."""

    cap: int
    censoring: bool  # True for uncapped mode: hitting the cap means "still alive"

    @classmethod
    def capped(cls, horizon: int) -> "HorizonPolicy":
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        return cls(cap=int(horizon), censoring=False)

    @classmethod
    def uncapped(cls, safety_limit: int = 100_000) -> "HorizonPolicy":
        if not 1 <= safety_limit <= 10_000_000:
            raise ValueError("safety limit must be in [1, 1e7]")
        return cls(cap=int(safety_limit), censoring=True)


def cartpole_accelerations(state, force, cfg: EnvConfig):
    """Accelerations (x_ddot, theta_ddot) of the standard cart-pole ODE."""
    _, x_dot, theta, theta_dot = state
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    total_mass = cfg.cart_mass + cfg.pole_mass
    pole_ml = cfg.pole_mass * cfg.half_length
    temp = (force + pole_ml * theta_dot ** 2 * sin_t) / total_mass
    theta_acc = (cfg.gravity * sin_t - cos_t * temp) / (
        cfg.half_length * (4.0 / 3.0 - cfg.pole_mass * cos_t ** 2 / total_mass))
    x_acc = temp - pole_ml * theta_acc * cos_t / total_mass
    return x_acc, theta_acc


def cartpole_euler_step(state, force, cfg: EnvConfig, dt: float):
    """One explicit Euler step: positions advance with old velocities."""
    x, x_dot, theta, theta_dot = state
    x_acc, theta_acc = cartpole_accelerations(state, force, cfg)
    return np.array([
        x + dt * x_dot,
        x_dot + dt * x_acc,
        theta + dt * theta_dot,
        theta_dot + dt * theta_acc,
    ])


def cartpole_energy(state, cfg: EnvConfig) -> float:
    """Total mechanical energy of the cart + uniform-rod pole.

    Conserved by the exact force-free dynamics; used to bound the Euler
    integration drift in tests.
    """
    _, x_dot, theta, theta_dot = state
    m_c, m_p, half = cfg.cart_mass, cfg.pole_mass, cfg.half_length
    v_cm_sq = (x_dot ** 2 + 2.0 * half * theta_dot * x_dot * np.cos(theta)
               + half ** 2 * theta_dot ** 2)
    inertia_cm = m_p * half ** 2 / 3.0
    kinetic = 0.5 * m_c * x_dot ** 2 + 0.5 * m_p * v_cm_sq + 0.5 * inertia_cm * theta_dot ** 2
    potential = m_p * cfg.gravity * half * np.cos(theta)
    return float(kinetic + potential)


class CartPole:
    """Discrete-action cart-pole balancing task."""

    obs_size = 4
    n_actions = 2
    min_fitness = 0.0

    def __init__(self, cfg: EnvConfig | None = None):
        self.cfg = cfg if cfg is not None else EnvConfig()
        self.theta_limit = np.deg2rad(self.cfg.theta_limit_deg)
        self.state = np.zeros(4)
        self._terminal = True  # must reset before stepping

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        r = self.cfg.init_range
        self.state = rng.uniform(-r, r, size=4)
        self._terminal = self._is_terminal(self.state)
        return self.state.copy()

    def _is_terminal(self, state) -> bool:
        return bool(abs(state[2]) > self.theta_limit or abs(state[0]) > self.cfg.x_limit)

    def step(self, action: int) -> EnvStep:
        if self._terminal:
            raise RuntimeError("step() called on a terminal environment; reset first")
        if action not in (0, 1):
            raise ValueError(f"cart-pole expects action 0 (left) or 1 (right), got {action!r}")
        force = self.cfg.force if action == 1 else -self.cfg.force
        self.state = cartpole_euler_step(self.state, force, self.cfg, self.cfg.dt)
        self._terminal = self._is_terminal(self.state)
        reward = 0.0 if self._terminal else 1.0
        return EnvStep(self.state.copy(), reward, self._terminal)


class ConstantRewardEnv:
    """Never-terminal diagnostic environment: zero observation, +1 per step."""

    obs_size = 4
    n_actions = 2
    min_fitness = 0.0

    def __init__(self, cfg: EnvConfig | None = None):
        self._obs = np.zeros(self.obs_size)

    def reset(self, seed: int) -> np.ndarray:
        return self._obs.copy()

    def step(self, action: int) -> EnvStep:
        return EnvStep(self._obs.copy(), 1.0, False)


ENVIRONMENTS = {"cartpole": CartPole, "constant": ConstantRewardEnv}


def make_env(cfg: EnvConfig):
    return ENVIRONMENTS[cfg.name](cfg)


@dataclass
class EpisodeTrace:
    """Per-step record of one rollout plus its summary flags.

    ``lifespan`` counts surviving steps (equals cumulative reward on
    cart-pole); ``length`` counts env steps taken, including a final
    terminal one.
    """

    length: int = 0
    lifespan: float = 0.0
    terminated: bool = False
    censored: bool = False
    blowup: bool = False
    horizon: int = 0
    rewards: np.ndarray = field(default_factory=lambda: np.empty(0))
    cumulative: np.ndarray = field(default_factory=lambda: np.empty(0))
    terminal_flags: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=bool))
    observations: np.ndarray | None = None
    actions: np.ndarray | None = None


def run_episode(net, env, policy: HorizonPolicy, seed: int,
                record: str = "rewards") -> EpisodeTrace:
    """Roll one episode: observe -> act (forward + plasticity) -> step env.

    ``record`` is "full" (observations and actions too), "rewards"
    (per-step reward series only), or "none" (summary scalars only, for
    long uncapped evaluations).
    """
    if record not in ("full", "rewards", "none"):
        raise ValueError(f"unknown record mode {record!r}")
    obs = env.reset(seed)
    net.reset()
    keep = record != "none"
    rewards = [] if keep else None
    flags = [] if keep else None
    all_obs = [] if record == "full" else None
    all_act = [] if record == "full" else None

    trace = EpisodeTrace(horizon=policy.cap)
    total = 0.0
    steps = 0
    blown = False
    terminated = False
    while steps < policy.cap:
        try:
            if not np.all(np.isfinite(obs)):
                raise NumericalBlowup("non-finite observation")
            action = net.act(obs)
        except NumericalBlowup:
            blown = True
            break
        result = env.step(action)
        steps += 1
        total += result.reward
        if keep:
            rewards.append(result.reward)
            flags.append(result.terminal)
        if record == "full":
            all_obs.append(obs.copy())
            all_act.append(action)
        if result.terminal:
            terminated = True
            break
        obs = result.observation

    trace.length = steps
    trace.lifespan = total
    trace.terminated = terminated
    trace.blowup = blown
    trace.censored = bool(policy.censoring and not terminated and not blown
                          and steps >= policy.cap)
    if keep:
        trace.rewards = np.asarray(rewards, dtype=float)
        trace.cumulative = np.cumsum(trace.rewards) if steps else np.empty(0)
        trace.terminal_flags = np.asarray(flags, dtype=bool)
    if record == "full":
        trace.observations = np.asarray(all_obs) if steps else np.empty((0, 0))
        trace.actions = np.asarray(all_act) if steps else np.empty(0)
    return trace


def write_trace_csv(trace: EpisodeTrace, path, meta: dict | None = None) -> None:
    """Write a trace as CSV columns (step, reward, cumulative_reward, terminal)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "reward", "cumulative_reward", "terminal"])
        for i in range(len(trace.rewards)):
            writer.writerow([i + 1, trace.rewards[i], trace.cumulative[i],
                             int(trace.terminal_flags[i])])
