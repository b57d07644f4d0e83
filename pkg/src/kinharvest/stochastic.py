"""ON/OFF analysis of slotted harvesting processes and surrogate processes.

A slot is ON when its mean harvested power exceeds a threshold ``gamma``.
Surrogates with the same first-order statistics as a measured profile (a
random permutation, or a two-state Markov chain fitted to the ON/OFF
sequence) show how much a policy's behavior depends on temporal structure.

Random streams come from numpy's PCG64 generator seeded explicitly, so a
given seed reproduces the same surrogate on every platform.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, InsufficientDataError
from .node import NJ, EnergyProfile

DEFAULT_GAMMA = 10e-6  # W
GAMMA_SWEEP = (10e-6, 20e-6, 30e-6, 40e-6)
DEFAULT_ETA_H = 0.2
MIN_RUNS_COUNT = 10
MIN_PATTERN_COUNT = 30
GENERATOR = "PCG64"


@dataclass(frozen=True)
class OnOffSeries:
    """Per-slot ON (True) / OFF (False) states for threshold ``gamma`` (W)."""

    states: np.ndarray
    gamma: float
    T_int: float = 1.0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=bool).copy()
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self):
        return len(self.states)

    @property
    def fraction(self) -> float:
        return float(self.states.mean()) if len(self.states) else 0.0

    @property
    def intervals(self) -> list:
        """(start slot, length) of each maximal ON run."""
        padded = np.concatenate(([0], self.states.astype(np.int8), [0]))
        edges = np.diff(padded)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1)
        return [(int(a), int(b - a)) for a, b in zip(starts, ends)]

    @property
    def durations(self) -> np.ndarray:
        """ON interval lengths in slots."""
        return np.array([n for _, n in self.intervals], dtype=np.int64)

    @property
    def median_on(self) -> float:
        """Median ON interval in seconds (NaN without ON slots)."""
        d = self.durations
        return float(np.median(d)) * self.T_int if d.size else math.nan

    def stats(self) -> dict:
        cp = conditional_probs(self)
        return {
            "fraction": self.fraction,
            "n_intervals": len(self.intervals),
            "median_on_s": _json_float(self.median_on),
            "p_on_given_on": _json_float(cp.p_on_given_on),
            "p_on_given_on_off": _json_float(cp.p_on_given_on_off),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("slot,state\n")
        for i, on in enumerate(self.states):
            buf.write(f"{i},{'ON' if on else 'OFF'}\n")
        return buf.getvalue()


def _json_float(x: float):
    return None if math.isnan(x) else x


def onoff(power_slots, gamma: float = DEFAULT_GAMMA, T_int: float = 1.0) -> OnOffSeries:
    """Threshold per-slot mean powers (W): ON where ``P > gamma``."""
    p = np.asarray(power_slots, dtype=float)
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ConfigurationError("slot powers must be finite and non-negative")
    return OnOffSeries(p > gamma, gamma, T_int)


def energy_threshold(gamma: float, T_int: float = 1.0, eta_h: float = DEFAULT_ETA_H) -> float:
    """Per-slot energy (nJ) corresponding to power ``gamma`` after harvest efficiency."""
    return gamma * eta_h * T_int * NJ


def profile_onoff(profile: EnergyProfile, gamma: float = DEFAULT_GAMMA, eta_h: float | None = None) -> OnOffSeries:
    """ON/OFF states of a slotted energy profile.

    ``eta_h`` defaults to the value recorded when the profile was built.
    """
    eta_h = profile.meta.get("eta_h", DEFAULT_ETA_H) if eta_h is None else eta_h
    if not eta_h > 0:
        raise ConfigurationError("eta_h must be positive to map gamma onto energies")
    thr = energy_threshold(gamma, profile.T_int, eta_h)
    return OnOffSeries(profile.Q > thr, gamma, profile.T_int)


def _states(source, gamma, eta_h=None) -> np.ndarray:
    if isinstance(source, OnOffSeries):
        return source.states
    if isinstance(source, EnergyProfile):
        return profile_onoff(source, gamma, eta_h).states
    return np.asarray(source, dtype=bool)


# --------------------------------------------------------------------------
# surrogates


def iid_surrogate(profile: EnergyProfile, seed: int) -> EnergyProfile:
    """Uniform random permutation of the slot energies."""
    rng = np.random.default_rng(seed)
    meta = {"surrogate": "iid", "seed": seed, "generator": GENERATOR}
    return EnergyProfile(rng.permutation(profile.Q), profile.T_int, meta)


def transition_matrix(states) -> tuple:
    """Maximum-likelihood 2x2 transition matrix and its row counts.

    Row/column 0 is OFF and 1 is ON; rows with no observed departures are NaN.
    """
    s = np.asarray(states, dtype=np.int64)
    counts = np.zeros((2, 2), dtype=np.int64)
    if s.size >= 2:
        np.add.at(counts, (s[:-1], s[1:]), 1)
    rows = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = counts / rows[:, None]
    return P, rows


def markov_surrogate(
    profile: EnergyProfile,
    gamma: float = DEFAULT_GAMMA,
    seed: int = 0,
    eta_h: float | None = None,
) -> EnergyProfile:
    """Two-state chain fitted to the profile's ON/OFF sequence.

    Each state emits the mean energy of the source slots in that state,
    rounded to whole nJ; the exact means, the fitted matrix and the seed are
    kept in ``meta``.  A source with only one state (or a state that is
    never left) cannot be fitted fully: ``meta["degenerate"]`` is set, a
    warning is issued, and the unobserved transition row is replaced by the
    state frequencies.
    """
    states = _states(profile, gamma, eta_h)
    n = len(states)
    Q = profile.Q
    means = [float(Q[~states].mean()) if (~states).any() else 0.0,
             float(Q[states].mean()) if states.any() else 0.0]
    P, rows = transition_matrix(states)
    freq = np.array([1 - states.mean(), states.mean()]) if n else np.array([1.0, 0.0])
    degenerate = bool(n == 0 or states.all() or not states.any() or np.any(rows == 0))
    fitted = P.copy()
    for r in range(2):
        if rows[r] == 0:
            fitted[r] = freq
    if degenerate:
        warnings.warn("ON/OFF sequence does not determine a two-state chain; output is degenerate",
                      RuntimeWarning, stacklevel=2)

    rng = np.random.default_rng(seed)
    u = rng.random(n)
    out = np.empty(n, dtype=bool)
    if n:
        state = bool(u[0] < freq[1])
        out[0] = state
        stay = (fitted[0, 0], fitted[1, 1])
        for i in range(1, n):
            if u[i] >= stay[state]:
                state = not state
            out[i] = state
    values = np.rint(np.where(out, means[1], means[0])).astype(np.int64)
    meta = {
        "surrogate": "markov",
        "seed": seed,
        "generator": GENERATOR,
        "gamma": gamma,
        "off_mean": means[0],
        "on_mean": means[1],
        "transition": P.tolist(),
        "degenerate": degenerate,
        "states": out,
    }
    return EnergyProfile(values, profile.T_int, meta)


# --------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class RunsResult:
    z: float
    p: float
    runs: int
    n1: int
    n2: int

    def as_dict(self) -> dict:
        return {"z": self.z, "p": self.p, "runs": self.runs, "n1": self.n1, "n2": self.n2}


def runs_test(states) -> RunsResult:
    """Wald-Wolfowitz runs test for independence of a binary sequence.

    Normal approximation with ``mu = 2 n1 n2 / n + 1`` and
    ``var = (mu - 1)(mu - 2) / (n - 1)``; the p-value is two-sided.
    """
    s = np.asarray(states)
    if isinstance(states, OnOffSeries):
        s = states.states
    symbols = np.unique(s)
    if symbols.size != 2:
        raise InsufficientDataError("runs test needs exactly two distinct symbols")
    b = s == symbols[1]
    n1, n2 = int(b.sum()), int((~b).sum())
    if min(n1, n2) < MIN_RUNS_COUNT:
        raise InsufficientDataError(
            f"runs test needs at least {MIN_RUNS_COUNT} of each symbol, got {n1} and {n2}"
        )
    n = n1 + n2
    runs = int(np.count_nonzero(b[1:] != b[:-1])) + 1
    mu = 2.0 * n1 * n2 / n + 1
    sigma = math.sqrt((mu - 1) * (mu - 2) / (n - 1))
    z = (runs - mu) / sigma
    return RunsResult(z=z, p=float(2 * norm.sf(abs(z))), runs=runs, n1=n1, n2=n2)


@dataclass(frozen=True)
class ConditionalProbs:
    """Empirical ON probabilities given the preceding one or two states."""

    p_on_given_on: float
    p_on_given_off: float
    p_on_given_on_on: float
    p_on_given_on_off: float
    counts: dict = field(default_factory=dict)

    @property
    def low_confidence(self) -> tuple:
        """Patterns seen fewer than the minimum number of times."""
        return tuple(k for k, c in self.counts.items() if c < MIN_PATTERN_COUNT)

    def as_dict(self) -> dict:
        d = {
            k: _json_float(getattr(self, k))
            for k in ("p_on_given_on", "p_on_given_off", "p_on_given_on_on", "p_on_given_on_off")
        }
        d["counts"] = dict(self.counts)
        d["low_confidence"] = list(self.low_confidence)
        return d


def conditional_probs(source, gamma: float = DEFAULT_GAMMA, eta_h: float | None = None) -> ConditionalProbs:
    """Order-1 and order-2 conditional ON frequencies.

    ``source`` may be an :class:`EnergyProfile` (thresholded at ``gamma``),
    an :class:`OnOffSeries` or a boolean array.  The pattern names read
    most-recent first: ``on_off`` means ON at ``i-1`` and OFF at ``i-2``.
    """
    s = _states(source, gamma, eta_h)
    cur, prev1 = s[2:], s[1:-1]
    prev2 = s[:-2]
    # order-1 uses every pair so that short sequences still count
    a, b = s[1:], s[:-1]

    def freq(target, cond):
        n = int(cond.sum())
        return (float(target[cond].mean()) if n else math.nan), n

    p_on, n_on = freq(a, b)
    p_off, n_off = freq(a, ~b)
    p_onon, n_onon = freq(cur, prev1 & prev2)
    p_onoff, n_onoff = freq(cur, prev1 & ~prev2)
    counts = {"on": n_on, "off": n_off, "on_on": n_onon, "on_off": n_onoff}
    return ConditionalProbs(p_on, p_off, p_onon, p_onoff, counts)


def gamma_sweep(profile: EnergyProfile, gammas=GAMMA_SWEEP, eta_h: float | None = None) -> dict:
    """ON fraction and conditional probabilities for each threshold."""
    out = {}
    for g in gammas:
        series = profile_onoff(profile, g, eta_h)
        out[g] = {"fraction": series.fraction, **conditional_probs(series).as_dict()}
    return out
