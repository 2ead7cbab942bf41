"""Synaptic update rules: linear Hebbian, Oja, ABCD, and trace-based STDP.

All rules operate in place on a weight matrix shaped (post, pre) and clip the
result to [w_min, w_max]. Activity-based rules (Hebbian/Oja/ABCD) run once per
environment step on the real-valued backend, or once per rate window on the
spiking backend with window-mean rates as pre/post activity. STDP runs once
per internal step on binary spike vectors.

``stdp_pair_sum`` is the brute-force all-pairs form of STDP, kept solely as a
test oracle for the online trace rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class HebbParams:
    """Per-synapse learning-rate matrix for the linear Hebbian / Oja rules."""

    alpha: np.ndarray


@dataclass
class AbcdParams:
    """Coefficient matrices of the ABCD rule, all shaped like the weights.

    a scales the pre*post co-activation, b the post-only term, c the pre-only
    term, d is the activity-independent bias, and alpha the per-synapse rate.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    alpha: np.ndarray


@dataclass
class StdpParams:
    a_plus: np.ndarray
    a_minus: np.ndarray
    tau_plus: float = 10.0
    tau_minus: float = 10.0
    weight_dependence: str = "none"  # "none" | "soft-bounds"
    trace_decay: str = "euler"       # "euler" | "exact"

    def __post_init__(self):
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise ValueError("tau_plus and tau_minus must be > 0")
        if self.trace_decay == "euler" and (self.tau_plus < 1 or self.tau_minus < 1):
            raise ValueError("euler trace decay needs tau >= 1 to stay in [0, 1)")
        if np.any(self.a_plus < 0) or np.any(self.a_minus < 0):
            raise ValueError("a_plus and a_minus must be >= 0 elementwise")


@dataclass
class TraceState:
    """Pre-/post-synaptic spike traces for one weight matrix."""

    x: np.ndarray  # pre side, length = matrix columns
    y: np.ndarray  # post side, length = matrix rows

    @classmethod
    def zeros(cls, n_pre: int, n_post: int) -> "TraceState":
        return cls(x=np.zeros(n_pre), y=np.zeros(n_post))

    def reset(self) -> None:
        self.x.fill(0.0)
        self.y.fill(0.0)


def trace_decay_factor(tau: float, mode: str) -> float:
    """Per-step multiplicative decay of a trace with time constant tau."""
    if mode == "euler":
        return 1.0 - 1.0 / tau
    if mode == "exact":
        return math.exp(-1.0 / tau)
    raise ValueError(f"unknown trace decay mode {mode!r}")


def _check_shapes(w, pre, post):
    if w.shape != (post.shape[0], pre.shape[0]):
        raise ValueError(
            f"weight shape {w.shape} incompatible with pre {pre.shape[0]} / post {post.shape[0]}")


def hebbian_update(w, alpha, pre, post, w_min, w_max) -> np.ndarray:
    """W <- (1-alpha) (.) W + alpha (.) outer(post, pre), clipped."""
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    _check_shapes(w, pre, post)
    w *= 1.0 - alpha
    w += alpha * np.outer(post, pre)
    np.clip(w, w_min, w_max, out=w)
    return w


def oja_update(w, alpha, pre, post, w_min, w_max) -> np.ndarray:
    """Hebbian co-activation with weight decay scaled by squared post-activity.

    dW_ij = alpha_ij * ((pre_j - w_ij * post_i) * post_i), applied on top of a
    (1 - alpha) leak of the current weight. Works identically on real-valued
    activations and on window-mean spike rates.
    """
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    _check_shapes(w, pre, post)
    delta = np.outer(post, pre) - w * (post ** 2)[:, None]
    w *= 1.0 - alpha
    w += alpha * delta
    np.clip(w, w_min, w_max, out=w)
    return w


def oja_update_rates(w, eta, pre_rates, post_rates, w_min, w_max) -> np.ndarray:
    """Rate-window form of the Oja update used by the spiking backend."""
    return oja_update(w, eta, pre_rates, post_rates, w_min, w_max)


def abcd_update(w, params: AbcdParams, pre, post, w_min, w_max) -> np.ndarray:
    """W <- W + alpha (.) (a (.) outer(post, pre) + b (.) post + c (.) pre + d), clipped."""
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    _check_shapes(w, pre, post)
    delta = params.a * np.outer(post, pre)
    delta += params.b * post[:, None]
    delta += params.c * pre[None, :]
    delta += params.d
    w += params.alpha * delta
    np.clip(w, w_min, w_max, out=w)
    return w


def _check_binary(name, v):
    if not np.all((v == 0.0) | (v == 1.0)):
        raise ValueError(f"{name} must be a binary spike vector")


def stdp_step(w, params: StdpParams, traces: TraceState, pre_spikes, post_spikes,
              w_min, w_max) -> np.ndarray:
    """One internal-step online STDP update.

    Traces decay multiplicatively, then the pre trace absorbs this step's pre
    spikes. Potentiation gates on post spikes through the (updated) pre trace;
    depression gates on pre spikes through the post trace *before* it absorbs
    this step's post spikes, so a coincident pair contributes potentiation
    only. With weight_dependence "none" the summed updates over an episode
    reproduce the all-pairs form exactly; "soft-bounds" scales steps by the
    remaining headroom (w_max - W) / (W - w_min), with the step factor clamped
    to 1 so a bound can never be overshot.
    """
    pre_spikes = np.asarray(pre_spikes, dtype=float)
    post_spikes = np.asarray(post_spikes, dtype=float)
    _check_shapes(w, pre_spikes, post_spikes)
    _check_binary("pre_spikes", pre_spikes)
    _check_binary("post_spikes", post_spikes)

    traces.x *= trace_decay_factor(params.tau_plus, params.trace_decay)
    traces.y *= trace_decay_factor(params.tau_minus, params.trace_decay)
    traces.x += pre_spikes

    if params.weight_dependence == "soft-bounds":
        up = np.minimum(params.a_plus * np.outer(post_spikes, traces.x), 1.0)
        down = np.minimum(params.a_minus * np.outer(traces.y, pre_spikes), 1.0)
        w += (w_max - w) * up
        w -= (w - w_min) * down
    else:
        w += params.a_plus * np.outer(post_spikes, traces.x)
        w -= params.a_minus * np.outer(traces.y, pre_spikes)

    traces.y += post_spikes
    np.clip(w, w_min, w_max, out=w)
    return w


def stdp_kernel_value(delta_t: float, a_plus: float, a_minus: float,
                      tau_plus: float, tau_minus: float,
                      trace_decay: str = "exact") -> float:
    """Pairwise STDP weight change for spike-time difference t_post - t_pre.

    Potentiation a_plus * decay^dt for dt >= 0, depression
    -a_minus * decay^|dt| for dt < 0, where decay is exp(-1/tau) in "exact"
    mode (the textbook exponential window) or (1 - 1/tau) in "euler" mode to
    match Euler-decayed traces.
    """
    if delta_t >= 0:
        return a_plus * trace_decay_factor(tau_plus, trace_decay) ** delta_t
    return -a_minus * trace_decay_factor(tau_minus, trace_decay) ** (-delta_t)


def stdp_pair_sum(pre_times, post_times, a_plus: float, a_minus: float,
                  tau_plus: float = 10.0, tau_minus: float = 10.0,
                  trace_decay: str = "exact") -> float:
    """Brute-force all-pairs STDP sum over two spike-time lists (test oracle)."""
    total = 0.0
    for t_pre in pre_times:
        for t_post in post_times:
            total += stdp_kernel_value(t_post - t_pre, a_plus, a_minus,
                                       tau_plus, tau_minus, trace_decay)
    return total
