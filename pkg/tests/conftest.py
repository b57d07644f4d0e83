from functools import lru_cache

import numpy as np
import pytest

from kinharvest.allocator import EAInstance
from kinharvest.harvester import H1, simulate
from kinharvest.node import EnergyProfile, LeakageSpec, SpendingSet, StorageModel, UtilitySpec, slots_from_power
from kinharvest.trace import SynthSpec, preprocess, synth_trace

# lines recorded by the acceptance suite, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_instance(
    rng: np.random.Generator,
    kind: str = "battery",
    max_K: int = 6,
    max_S: int = 3,
    s_max: int = 50,
    table: bool = False,
    leakage: bool = False,
) -> EAInstance:
    """Small random instance: Q(i) uniform on [0, 5 s_min], values <= s_max."""
    K = int(rng.integers(1, max_K + 1))
    nS = int(rng.integers(1, max_S + 1))
    S = sorted(rng.choice(np.arange(1, s_max + 1), size=nS, replace=False).tolist())
    s_min = S[0]
    Q = rng.integers(0, 5 * s_min + 1, size=K)
    C = int(rng.integers(max(S[0], 1), 3 * S[-1] + 1))
    B0 = int(rng.integers(0, C + 1))
    BK = int(rng.integers(0, C + 1)) if rng.random() < 0.5 else 0
    U = UtilitySpec("table", {s: int(rng.integers(0, 60)) for s in S}) if table else UtilitySpec()
    lk = LeakageSpec("proportional", rate=float(rng.uniform(0, 0.2))) if leakage else LeakageSpec()
    return EAInstance(
        EnergyProfile(Q), StorageModel(kind, C), SpendingSet(tuple(S)), U, B0, BK, lk,
        meta={"K": K, "S": S, "C": C},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@lru_cache(maxsize=None)
def burst_profile(duration: float, seed: int, blip_fraction: float = 0.0, on_fraction: float = 0.1):
    """(trace meta, energy profile) of an H1 harvester on a synthetic burst-walk."""
    trace = synth_trace(SynthSpec(
        kind="burst-walk", duration=duration, on_fraction=on_fraction, seed=seed,
        amplitude=3.0, blip_fraction=blip_fraction,
    ))
    power = simulate(H1, preprocess(trace)).power
    return trace.meta, slots_from_power(power, 1.0, 0.2)
