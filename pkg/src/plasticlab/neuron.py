"""Spiking neuron backends: integrate-and-fire and leaky integrate-and-fire.

Continuous membrane dynamics are discretized at one internal step per unit
time. The leaky update is forward Euler by default,

    v <- v + (1/tau_m) * (r_m * I - (v - v_rest)),

with an exact-exponential variant (the analytic solution of the leak ODE over
one step) available for verification. The non-leaky integrator drops the leak
term. A neuron spikes when v >= v_th and its potential resets to v_rest for
the next step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import NeuronConfig
from .errors import NumericalBlowup


@dataclass(frozen=True)
class LifParams:
    tau_m: float = 10.0
    r_m: float = 1.0
    v_rest: float = 0.0
    v_th: float = 1.0
    leaky: bool = True
    integration: str = "euler"  # "euler" | "exact"

    def __post_init__(self):
        if self.tau_m <= 0:
            raise ValueError("tau_m must be > 0")
        if self.v_th <= self.v_rest:
            raise ValueError("v_th must be > v_rest")

    @classmethod
    def from_config(cls, cfg: NeuronConfig) -> "LifParams":
        return cls(tau_m=cfg.tau_m, r_m=cfg.r_m, v_rest=cfg.v_rest,
                   v_th=cfg.v_th, leaky=cfg.leaky, integration=cfg.integration)


class MembraneState:
    """Per-neuron membrane potentials plus the step of each neuron's last spike."""

    def __init__(self, size: int, v_rest: float = 0.0):
        self.v = np.full(size, v_rest, dtype=float)
        self.last_spike = np.full(size, -np.inf)
        self._v_rest = v_rest
        self.step_count = 0

    def reset(self) -> None:
        self.v.fill(self._v_rest)
        self.last_spike.fill(-np.inf)
        self.step_count = 0


def step_membrane(state: MembraneState, params: LifParams,
                  current: np.ndarray) -> np.ndarray:
    """Advance membranes one internal step; return the binary spike vector."""
    current = np.asarray(current, dtype=float)
    if current.shape != state.v.shape:
        raise ValueError(f"current shape {current.shape} != membrane shape {state.v.shape}")
    if not np.all(np.isfinite(current)):
        raise NumericalBlowup("non-finite input current in step_membrane")
    drive = params.r_m * current
    if params.leaky:
        if params.integration == "exact":
            # analytic one-step solution: relax toward v_rest + r_m * I
            decay = math.exp(-1.0 / params.tau_m)
            v_inf = params.v_rest + drive
            state.v[:] = v_inf + (state.v - v_inf) * decay
        else:
            state.v += (drive - (state.v - params.v_rest)) / params.tau_m
    else:
        # perfect integrator: the leak ODE reduces to a pure accumulation,
        # for which Euler is already exact
        state.v += drive / params.tau_m
    spikes = (state.v >= params.v_th).astype(float)
    state.step_count += 1
    fired = spikes > 0
    if np.any(fired):
        state.v[fired] = params.v_rest
        state.last_spike[fired] = state.step_count
    return spikes


def encode_observation(obs: np.ndarray, gain: float) -> np.ndarray:
    """Observation -> input current, held constant across the internal window."""
    return gain * np.asarray(obs, dtype=float)


class RateWindow:
    """Ring buffer of the last ``n`` binary spike vectors of one layer."""

    def __init__(self, n: int, size: int):
        if n < 1:
            raise ValueError("window length must be >= 1")
        self.n = n
        self.buffer = np.zeros((n, size))
        self.count = 0

    @property
    def full(self) -> bool:
        return self.count >= self.n

    def push(self, spikes: np.ndarray) -> None:
        self.buffer[self.count % self.n, :] = spikes
        self.count += 1

    def rates(self) -> np.ndarray:
        if not self.full:
            raise RuntimeError(f"rate window not full ({self.count}/{self.n} steps)")
        return self.buffer.mean(axis=0)

    def reset(self) -> None:
        self.buffer.fill(0.0)
        self.count = 0


def decode_action(rates: np.ndarray | RateWindow, mode: str = "argmax"):
    """Windowed rates -> action.

    "argmax": discrete action = output neuron with the highest mean rate
    (ties resolve to the lowest index). "affine": continuous outputs
    2*rate - 1 in [-1, 1].
    """
    if isinstance(rates, RateWindow):
        rates = rates.rates()
    rates = np.asarray(rates, dtype=float)
    if mode == "argmax":
        return int(np.argmax(rates))
    if mode == "affine":
        return 2.0 * rates - 1.0
    raise ValueError(f"unknown decode mode {mode!r}")


def write_raster_csv(events, path, meta: dict | None = None) -> None:
    """Dump spike events as CSV rows (step, layer, neuron)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "layer", "neuron"])
        for step, layer, neuron in events:
            writer.writerow([step, layer, neuron])
