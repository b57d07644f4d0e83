"""Trace-driven kinetic energy harvesting and energy allocation toolkit."""

__version__ = "0.1.0"

from .allocator import (
    AllocationPlan,
    EAInstance,
    adversarial_instance,
    allocate_windows,
    brute_force_oracle,
    dp_optimal,
    fptas,
    greedy_online,
    scheme_lb,
    solve,
    validate_plan,
)
from .errors import (
    ConfigurationError,
    DomainError,
    InputError,
    InsufficientDataError,
    KinharvestError,
    ResourceLimitError,
)
from .harvester import H1, H2, HarvesterDesign, simulate
from .node import EnergyProfile, NodeConfig, SpendingSet, StorageModel, UtilitySpec, slots_from_power
from .stochastic import conditional_probs, iid_surrogate, markov_surrogate, onoff, profile_onoff, runs_test
from .trace import (
    AccelTrace,
    ScalarSeries,
    SynthSpec,
    abs_deviation,
    dominant_frequency,
    load_trace,
    preprocess,
    synth_trace,
)
from .tuner import data_rate, tune

__all__ = [name for name in dir() if not name.startswith("_")]
