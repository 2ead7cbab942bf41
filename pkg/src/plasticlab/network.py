"""Layered plastic networks: real-valued (tanh) and spiking (LIF) backends.

Both backends share one topology scheme: observation -> hidden layers ->
output layer, fully connected, optionally with self-recurrent connections on
hidden and output layers. The real-valued backend computes
x^(l) = tanh(W^(l) x^(l-1) [+ R^(l) x^(l)_prev]) once per environment step.
The spiking backend routes the observation as an input current through the
first weight matrix and runs ``internal_steps`` LIF updates per environment
step; actions decode from output-layer spike rates over that window.

Plasticity binds per weight matrix. Activity rules (hebbian/oja/abcd) run per
environment step on activations (ANN) or per window on mean rates (SNN); STDP
runs per internal step inside the spiking window, implemented by a compiled
kernel over flat arenas. The first spiking matrix has no pre-synaptic spike
events (its pre side is the analog observation), so STDP leaves it static.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .config import RunConfig
from .environment import ENVIRONMENTS
from .errors import ConfigError, NumericalBlowup
from .genome import Genome, GenomeLayout, Segment, decode_segment
from .neuron import LifParams, encode_observation
from .plasticity import (AbcdParams, TraceState, abcd_update, hebbian_update,
                         oja_update, trace_decay_factor)


@dataclass(frozen=True)
class LayerSpec:
    size: int
    recurrent: bool
    activation: str  # "tanh" | "spiking-passthrough"

    def __post_init__(self):
        if self.size < 1:
            raise ConfigError("layer size must be >= 1")


def clip_weights(w: np.ndarray, w_min: float, w_max: float) -> np.ndarray:
    """Clamp every entry to [w_min, w_max] in place."""
    if not w_min < w_max:
        raise ConfigError("weight bounds must satisfy w_min < w_max")
    return np.clip(w, w_min, w_max, out=w)


def build_layer_specs(cfg: RunConfig, obs_size: int, n_outputs: int) -> list:
    act = "tanh" if cfg.network.backend == "ann" else "spiking-passthrough"
    rec = cfg.network.recurrent
    specs = [LayerSpec(int(h), rec, act) for h in cfg.network.hidden]
    specs.append(LayerSpec(int(n_outputs), rec, act))
    return specs


def _rule_segments(rule: str, tag: str, shape: tuple, stdp_ok: bool) -> list:
    if rule == "none":
        return []
    if rule in ("hebbian", "oja"):
        return [Segment(f"alpha_{tag}", shape, "rate")]
    if rule == "abcd":
        return [Segment(f"abcd_{p}_{tag}", shape, "coeff") for p in "abcd"] + \
               [Segment(f"abcd_rate_{tag}", shape, "rate")]
    if rule == "stdp":
        if not stdp_ok:
            return []
        return [Segment(f"a_plus_{tag}", shape, "rate"),
                Segment(f"a_minus_{tag}", shape, "rate")]
    raise ConfigError(f"unknown plasticity rule {rule!r}")


def build_layout(cfg: RunConfig, obs_size: int, n_outputs: int) -> GenomeLayout:
    """Genome layout for the given topology, backend and rule."""
    specs = build_layer_specs(cfg, obs_size, n_outputs)
    rule = cfg.plasticity.rule
    snn = cfg.network.backend == "snn"
    sizes = [obs_size] + [s.size for s in specs]
    segments = []
    for layer in range(1, len(sizes)):
        shape = (sizes[layer], sizes[layer - 1])
        # the first spiking matrix has analog pre-activity: no spike pairs for STDP
        stdp_ok = not (snn and layer == 1)
        segments.append(Segment(f"w{layer}", shape, "weight"))
        segments.extend(_rule_segments(rule, f"w{layer}", shape, stdp_ok))
        if specs[layer - 1].recurrent:
            rshape = (sizes[layer], sizes[layer])
            segments.append(Segment(f"r{layer}", rshape, "weight"))
            segments.extend(_rule_segments(rule, f"r{layer}", rshape, True))
    return GenomeLayout(segments)


def env_io_sizes(cfg: RunConfig) -> tuple:
    env_cls = ENVIRONMENTS[cfg.environment.name]
    return env_cls.obs_size, env_cls.n_actions


def layout_for(cfg: RunConfig) -> GenomeLayout:
    obs_size, n_actions = env_io_sizes(cfg)
    return build_layout(cfg, obs_size, n_actions)


# ---------------------------------------------------------------------------
# Spiking window kernel
#
# All state lives in flat float64 arenas; matrix m connects layer m (pre) to
# layer m+1 (post), with layer 0 the analog observation. Offsets are int64
# arrays built at network construction. Semantics must match the reference
# numpy ops neuron.step_membrane and plasticity.stdp_step (tested for
# agreement): synchronous layer cascade per internal step, recurrent input
# from the layer's previous internal step, coincident pre/post pairs count as
# potentiation only.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _snn_window(x0, sizes, n_internal,
                v, z_cur, z_prev, acc, noff,
                w, woff, r, roff, rec_mask,
                stdp_on, stdp_mask, ap, am, xw, xoff, yw, yoff,
                rap, ram, rxw, ryw,
                tau_m, r_m, v_rest, v_th, leaky, exact, exp_decay,
                lam_p, lam_m, wd_soft, w_min, w_max,
                record, spikes_out):
    n_layers = sizes.shape[0] - 1
    max_n = 0
    for m in range(n_layers):
        if sizes[m + 1] > max_n:
            max_n = sizes[m + 1]
    cur = np.empty(max_n)

    for k in range(n_internal):
        for m in range(n_layers):
            n_pre = sizes[m]
            n_post = sizes[m + 1]
            off = noff[m]
            # synaptic current: feedforward from the cascade, recurrent from t-1
            for i in range(n_post):
                s = 0.0
                base = woff[m] + i * n_pre
                if m == 0:
                    for j in range(n_pre):
                        s += w[base + j] * x0[j]
                else:
                    poff = noff[m - 1]
                    for j in range(n_pre):
                        s += w[base + j] * z_cur[poff + j]
                cur[i] = s
            if rec_mask[m]:
                for i in range(n_post):
                    s = 0.0
                    base = roff[m] + i * n_post
                    for j in range(n_post):
                        s += r[base + j] * z_prev[off + j]
                    cur[i] += s
            # membrane update and threshold
            for i in range(n_post):
                drive = r_m * cur[i]
                vi = v[off + i]
                if leaky:
                    if exact:
                        v_inf = v_rest + drive
                        vi = v_inf + (vi - v_inf) * exp_decay
                    else:
                        vi += (drive - (vi - v_rest)) / tau_m
                else:
                    vi += drive / tau_m
                if vi >= v_th:
                    z_cur[off + i] = 1.0
                    vi = v_rest
                else:
                    z_cur[off + i] = 0.0
                v[off + i] = vi
                acc[off + i] += z_cur[off + i]
                if record:
                    spikes_out[k, off + i] = z_cur[off + i]
            # per-step STDP on the feedforward matrix (spiking pre layers only)
            if stdp_on and stdp_mask[m]:
                poff = noff[m - 1]
                xo = xoff[m]
                yo = yoff[m]
                for j in range(n_pre):
                    xw[xo + j] = xw[xo + j] * lam_p + z_cur[poff + j]
                for i in range(n_post):
                    yw[yo + i] *= lam_m
                for i in range(n_post):
                    zi = z_cur[off + i]
                    yi = yw[yo + i]
                    base = woff[m] + i * n_pre
                    for j in range(n_pre):
                        zj = z_cur[poff + j]
                        if zi == 0.0 and zj == 0.0:
                            continue
                        wij = w[base + j]
                        if wd_soft:
                            if zi == 1.0:
                                up = ap[base + j] * xw[xo + j]
                                if up > 1.0:
                                    up = 1.0
                                wij += (w_max - wij) * up
                            if zj == 1.0:
                                dn = am[base + j] * yi
                                if dn > 1.0:
                                    dn = 1.0
                                wij -= (wij - w_min) * dn
                        else:
                            if zi == 1.0:
                                wij += ap[base + j] * xw[xo + j]
                            if zj == 1.0:
                                wij -= am[base + j] * yi
                        if wij > w_max:
                            wij = w_max
                        elif wij < w_min:
                            wij = w_min
                        w[base + j] = wij
                for i in range(n_post):
                    yw[yo + i] += z_cur[off + i]
            # per-step STDP on the recurrent matrix: pre events are the layer's
            # own previous-step spikes (delivery time of the recurrent input)
            if stdp_on and rec_mask[m]:
                for j in range(n_post):
                    rxw[off + j] = rxw[off + j] * lam_p + z_prev[off + j]
                for i in range(n_post):
                    ryw[off + i] *= lam_m
                for i in range(n_post):
                    zi = z_cur[off + i]
                    yi = ryw[off + i]
                    base = roff[m] + i * n_post
                    for j in range(n_post):
                        zj = z_prev[off + j]
                        if zi == 0.0 and zj == 0.0:
                            continue
                        wij = r[base + j]
                        if wd_soft:
                            if zi == 1.0:
                                up = rap[base + j] * rxw[off + j]
                                if up > 1.0:
                                    up = 1.0
                                wij += (w_max - wij) * up
                            if zj == 1.0:
                                dn = ram[base + j] * yi
                                if dn > 1.0:
                                    dn = 1.0
                                wij -= (wij - w_min) * dn
                        else:
                            if zi == 1.0:
                                wij += rap[base + j] * rxw[off + j]
                            if zj == 1.0:
                                wij -= ram[base + j] * yi
                        if wij > w_max:
                            wij = w_max
                        elif wij < w_min:
                            wij = w_min
                        r[base + j] = wij
                for i in range(n_post):
                    ryw[off + i] += z_cur[off + i]
        # window bookkeeping: current spikes become the next step's recurrent input
        for m in range(n_layers):
            off = noff[m]
            for i in range(sizes[m + 1]):
                z_prev[off + i] = z_cur[off + i]


class PlasticNetwork:
    """A network instance decoded from a genome; owns all mutable rollout state."""

    def __init__(self, genome: Genome, cfg: RunConfig,
                 obs_size: int | None = None, n_outputs: int | None = None):
        if obs_size is None or n_outputs is None:
            obs_size, n_outputs = env_io_sizes(cfg)
        self.cfg = cfg
        self.obs_size = int(obs_size)
        self.n_outputs = int(n_outputs)
        self.backend = cfg.network.backend
        self.rule = cfg.plasticity.rule
        self.w_min = cfg.plasticity.w_min
        self.w_max = cfg.plasticity.w_max
        self.specs = build_layer_specs(cfg, self.obs_size, self.n_outputs)
        self.sizes = np.array([self.obs_size] + [s.size for s in self.specs],
                              dtype=np.int64)
        expected = build_layout(cfg, self.obs_size, self.n_outputs)
        if genome.layout != expected:
            mism = _first_layout_mismatch(genome.layout, expected)
            raise ConfigError(f"genome layout incompatible with config: {mism}")
        self.genome = genome
        self.lif = LifParams.from_config(cfg.neuron)
        self.n_internal = cfg.neuron.internal_steps
        self.record_spikes = False
        self.spike_events: list = []
        self._env_step = 0
        self._build_state()
        self.reset()

    # -- construction ------------------------------------------------------

    def _decoded(self) -> dict:
        parts = self.genome.layout.unflatten(self.genome.theta)
        return {seg.name: decode_segment(parts[seg.name], seg.kind, self.w_min, self.w_max)
                for seg in self.genome.layout.segments}

    def _build_state(self):
        L = len(self.specs)
        self.n_matrices = L
        sizes = self.sizes
        if self.backend == "ann":
            self.weights = [np.zeros((sizes[m + 1], sizes[m])) for m in range(L)]
            self.rweights = [np.zeros((sizes[m + 1], sizes[m + 1]))
                             if self.specs[m].recurrent else None for m in range(L)]
            self.acts = [np.zeros(sizes[m + 1]) for m in range(L)]
            self.prev_acts = [np.zeros(sizes[m + 1]) for m in range(L)]
        else:
            self._noff = np.zeros(L, dtype=np.int64)
            total = 0
            for m in range(L):
                self._noff[m] = total
                total += int(sizes[m + 1])
            self._n_neurons = total
            self._v = np.zeros(total)
            self._z = np.zeros(total)
            self._z_prev = np.zeros(total)
            self._acc = np.zeros(total)
            self._woff = np.zeros(L, dtype=np.int64)
            wtotal = 0
            for m in range(L):
                self._woff[m] = wtotal
                wtotal += int(sizes[m + 1] * sizes[m])
            self._wflat = np.zeros(wtotal)
            self.weights = [self._wflat[self._woff[m]:self._woff[m] + sizes[m + 1] * sizes[m]]
                            .reshape(sizes[m + 1], sizes[m]) for m in range(L)]
            self._rec_mask = np.array([s.recurrent for s in self.specs], dtype=np.bool_)
            self._roff = np.zeros(L, dtype=np.int64)
            rtotal = 0
            for m in range(L):
                self._roff[m] = rtotal
                if self.specs[m].recurrent:
                    rtotal += int(sizes[m + 1] * sizes[m + 1])
            self._rflat = np.zeros(max(rtotal, 1))
            self.rweights = [self._rflat[self._roff[m]:self._roff[m] + sizes[m + 1] ** 2]
                             .reshape(sizes[m + 1], sizes[m + 1])
                             if self.specs[m].recurrent else None for m in range(L)]
            # STDP arenas (allocated regardless of rule; zero-size cost is negligible)
            self._stdp_mask = np.array(
                [self.rule == "stdp" and m > 0 for m in range(L)], dtype=np.bool_)
            self._ap = np.zeros(wtotal)
            self._am = np.zeros(wtotal)
            self._rap = np.zeros(max(rtotal, 1))
            self._ram = np.zeros(max(rtotal, 1))
            self._xoff = np.zeros(L, dtype=np.int64)
            xtotal = 0
            for m in range(L):
                self._xoff[m] = xtotal
                xtotal += int(sizes[m])
            self._xw = np.zeros(xtotal)
            self._yoff = self._noff
            self._yw = np.zeros(total)
            self._rxw = np.zeros(total)
            self._ryw = np.zeros(total)
            self._spikes_out = np.zeros((self.n_internal, total))

        # activity-rule parameter holders (both backends)
        self.alpha: list = [None] * L
        self.ralpha: list = [None] * L
        self.abcd: list = [None] * L
        self.rabcd: list = [None] * L

    def _load_genome_values(self):
        decoded = self._decoded()
        for m in range(self.n_matrices):
            tag = f"w{m + 1}"
            np.copyto(self.weights[m], decoded[tag])
            if self.rweights[m] is not None:
                np.copyto(self.rweights[m], decoded[f"r{m + 1}"])
            if self.rule in ("hebbian", "oja"):
                self.alpha[m] = decoded[f"alpha_{tag}"]
                if self.rweights[m] is not None:
                    self.ralpha[m] = decoded[f"alpha_r{m + 1}"]
            elif self.rule == "abcd":
                self.abcd[m] = AbcdParams(*(decoded[f"abcd_{p}_{tag}"] for p in "abcd"),
                                          alpha=decoded[f"abcd_rate_{tag}"])
                if self.rweights[m] is not None:
                    rt = f"r{m + 1}"
                    self.rabcd[m] = AbcdParams(*(decoded[f"abcd_{p}_{rt}"] for p in "abcd"),
                                               alpha=decoded[f"abcd_rate_{rt}"])
            elif self.rule == "stdp":
                if self._stdp_mask[m]:
                    base = self._woff[m]
                    n = self.weights[m].size
                    self._ap[base:base + n] = decoded[f"a_plus_{tag}"].ravel()
                    self._am[base:base + n] = decoded[f"a_minus_{tag}"].ravel()
                if self.rweights[m] is not None:
                    base = self._roff[m]
                    n = self.rweights[m].size
                    self._rap[base:base + n] = decoded[f"a_plus_r{m + 1}"].ravel()
                    self._ram[base:base + n] = decoded[f"a_minus_r{m + 1}"].ravel()

    # -- lifecycle ---------------------------------------------------------

    def reset(self) -> None:
        """Zero all rollout state and restore weights to their genome values."""
        self._load_genome_values()
        self._env_step = 0
        self.spike_events = []
        if self.backend == "ann":
            for a in self.acts:
                a.fill(0.0)
            for a in self.prev_acts:
                a.fill(0.0)
        else:
            self._v.fill(self.lif.v_rest)
            self._z.fill(0.0)
            self._z_prev.fill(0.0)
            self._acc.fill(0.0)
            self._xw.fill(0.0)
            self._yw.fill(0.0)
            self._rxw.fill(0.0)
            self._ryw.fill(0.0)

    # -- real-valued backend ------------------------------------------------

    def forward(self, observation: np.ndarray) -> np.ndarray:
        """One tanh forward pass; stores activations for the plasticity phase."""
        if self.backend != "ann":
            raise ConfigError("forward() is the real-valued pass; use act() for snn")
        x = np.asarray(observation, dtype=float)
        if x.shape != (self.obs_size,):
            raise ConfigError(
                f"observation size {x.shape} != input layer size ({self.obs_size},)")
        for m in range(self.n_matrices):
            z = self.weights[m] @ x
            if self.rweights[m] is not None:
                z = z + self.rweights[m] @ self.prev_acts[m]
            x = np.tanh(z)
            self.acts[m] = x
        return x

    def _apply_rate_rule(self, w, alpha_or_params, pre, post):
        if self.rule == "hebbian":
            hebbian_update(w, alpha_or_params, pre, post, self.w_min, self.w_max)
        elif self.rule == "oja":
            oja_update(w, alpha_or_params, pre, post, self.w_min, self.w_max)
        elif self.rule == "abcd":
            abcd_update(w, alpha_or_params, pre, post, self.w_min, self.w_max)

    def _ann_plasticity(self, observation):
        if self.rule == "none":
            return
        pre = np.asarray(observation, dtype=float)
        for m in range(self.n_matrices):
            params = self.alpha[m] if self.rule in ("hebbian", "oja") else self.abcd[m]
            self._apply_rate_rule(self.weights[m], params, pre, self.acts[m])
            if self.rweights[m] is not None:
                rparams = self.ralpha[m] if self.rule in ("hebbian", "oja") else self.rabcd[m]
                self._apply_rate_rule(self.rweights[m], rparams, self.prev_acts[m],
                                      self.acts[m])
            pre = self.acts[m]

    # -- spiking backend ----------------------------------------------------

    def _snn_window_rates(self, observation) -> np.ndarray:
        x0 = encode_observation(observation, self.cfg.neuron.encode_gain)
        self._acc.fill(0.0)
        lif = self.lif
        pc = self.cfg.plasticity
        record = self.record_spikes
        _snn_window(
            x0, self.sizes, self.n_internal,
            self._v, self._z, self._z_prev, self._acc, self._noff,
            self._wflat, self._woff, self._rflat, self._roff, self._rec_mask,
            self.rule == "stdp", self._stdp_mask,
            self._ap, self._am, self._xw, self._xoff, self._yw, self._yoff,
            self._rap, self._ram, self._rxw, self._ryw,
            lif.tau_m, lif.r_m, lif.v_rest, lif.v_th, lif.leaky,
            lif.integration == "exact", np.exp(-1.0 / lif.tau_m),
            trace_decay_factor(pc.tau_plus, pc.trace_decay),
            trace_decay_factor(pc.tau_minus, pc.trace_decay),
            pc.weight_dependence == "soft-bounds", self.w_min, self.w_max,
            record, self._spikes_out)
        if record:
            base = self._env_step * self.n_internal
            steps, neurons = np.nonzero(self._spikes_out)
            for k, n in zip(steps, neurons):
                layer = int(np.searchsorted(self._noff, n, side="right"))
                self.spike_events.append((base + int(k), layer, int(n - self._noff[layer - 1])))
        rates = self._acc / self.n_internal
        return rates

    def _snn_rate_plasticity(self, observation, rates):
        if self.rule not in ("hebbian", "oja", "abcd"):
            return
        # layer-0 "rate" is the window mean of the injected current, i.e. the
        # encoded observation itself (constant across the window)
        pre = encode_observation(observation, self.cfg.neuron.encode_gain)
        for m in range(self.n_matrices):
            off = self._noff[m]
            post = rates[off:off + self.sizes[m + 1]]
            params = self.alpha[m] if self.rule in ("hebbian", "oja") else self.abcd[m]
            self._apply_rate_rule(self.weights[m], params, pre, post)
            if self.rweights[m] is not None:
                rparams = self.ralpha[m] if self.rule in ("hebbian", "oja") else self.rabcd[m]
                self._apply_rate_rule(self.rweights[m], rparams, post, post)
            pre = post

    def output_rates(self, rates_flat: np.ndarray) -> np.ndarray:
        off = self._noff[self.n_matrices - 1]
        return rates_flat[off:off + self.n_outputs]

    # -- acting -------------------------------------------------------------

    def act(self, observation: np.ndarray):
        """Full per-environment-step pass: forward, plasticity, decode action."""
        obs = np.asarray(observation, dtype=float)
        if not np.all(np.isfinite(obs)):
            raise NumericalBlowup("non-finite observation")
        if self.backend == "ann":
            out = self.forward(obs)
            self._ann_plasticity(obs)
            for m in range(self.n_matrices):
                np.copyto(self.prev_acts[m], self.acts[m])
            self._env_step += 1
            if self.cfg.neuron.decode == "affine":
                return out.copy()
            return int(np.argmax(out))
        if obs.shape != (self.obs_size,):
            raise ConfigError(
                f"observation size {obs.shape} != input layer size ({self.obs_size},)")
        rates = self._snn_window_rates(obs)
        self._snn_rate_plasticity(obs, rates)
        self._env_step += 1
        out = self.output_rates(rates)
        if self.cfg.neuron.decode == "affine":
            return 2.0 * out - 1.0
        return int(np.argmax(out))


def _first_layout_mismatch(got: GenomeLayout, expected: GenomeLayout) -> str:
    got_map = {s.name: s for s in got.segments}
    exp_map = {s.name: s for s in expected.segments}
    for name in exp_map:
        if name not in got_map:
            return f"segment {name!r} missing from genome"
        if got_map[name] != exp_map[name]:
            return (f"segment {name!r} differs: genome {got_map[name].shape} "
                    f"vs config {exp_map[name].shape}")
    extra = [n for n in got_map if n not in exp_map]
    if extra:
        return f"segment {extra[0]!r} not expected by config"
    return "segment order differs"


def build_network(genome: Genome, cfg: RunConfig) -> PlasticNetwork:
    return PlasticNetwork(genome, cfg)
