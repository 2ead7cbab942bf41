"""plasticlab: neuroevolution of plastic ANN/SNN controllers and
time-horizon generalization benchmarks."""

from .config import (BenchConfig, EnvConfig, EsConfig, NetworkConfig, NeuronConfig,
                     PlasticityConfig, RunConfig, TOOL_VERSION, config_hash,
                     default_config, load_config)
from .environment import (CartPole, ConstantRewardEnv, EnvStep, EpisodeTrace,
                          HorizonPolicy, make_env, run_episode)
from .errors import ConfigError, GenomeFormatError, NumericalBlowup
from .evolution import (EsConfig as _EsConfig, FitnessRecord, TrainResult,
                        es_update, evaluate_individual, evolve, sample_population,
                        train)
from .genome import Genome, GenomeLayout, Segment, load_genome, save_genome
from .network import LayerSpec, PlasticNetwork, build_layout, clip_weights, layout_for
from .neuron import (LifParams, MembraneState, RateWindow, decode_action,
                     encode_observation, step_membrane)
from .plasticity import (AbcdParams, HebbParams, StdpParams, TraceState,
                         abcd_update, hebbian_update, oja_update, stdp_pair_sum,
                         stdp_step)
from .bench import SweepSpec, fit_linear, reward_accumulation, run_sweep

__version__ = TOOL_VERSION
