import math
import warnings

import numpy as np
import pytest
from conftest import burst_profile
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.sandbox.stats.runs import runstest_1samp

from kinharvest.allocator import EAInstance, rate_kbps, scheme_lb
from kinharvest.errors import ConfigurationError, InsufficientDataError
from kinharvest.node import EnergyProfile, SpendingSet, StorageModel
from kinharvest.stochastic import (
    OnOffSeries,
    conditional_probs,
    energy_threshold,
    gamma_sweep,
    iid_surrogate,
    markov_surrogate,
    onoff,
    profile_onoff,
    runs_test,
    transition_matrix,
)


def markov_chain(n, p_stay_off, p_stay_on, seed):
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    out = np.empty(n, dtype=bool)
    state = False
    for i in range(n):
        if u[i] >= (p_stay_on if state else p_stay_off):
            state = not state
        out[i] = state
    return out


def bursty_profile(seed=0, n=2000):
    rng = np.random.default_rng(seed)
    states = markov_chain(n, 0.95, 0.8, seed)
    return EnergyProfile(np.where(states, rng.integers(3000, 9000, n), rng.integers(0, 500, n)))


# --------------------------------------------------------------------------
# ON/OFF


def test_onoff_examples():
    assert onoff([5e-6] * 4).fraction == 0.0
    s = onoff([20e-6, 20e-6, 5e-6, 20e-6])
    assert s.fraction == 0.75
    assert s.intervals == [(0, 2), (3, 1)]
    assert s.median_on == 1.5
    assert math.isnan(onoff([0.0]).median_on)
    with pytest.raises(ConfigurationError):
        onoff([-1e-6])
    with pytest.raises(ConfigurationError):
        onoff([math.nan])


def test_threshold_is_strict_and_in_energy_units():
    assert energy_threshold(10e-6) == pytest.approx(2000.0)
    p = EnergyProfile([2000, 2001, 0], meta={"eta_h": 0.2})
    assert profile_onoff(p).states.tolist() == [False, True, False]
    assert profile_onoff(p, eta_h=0.1).states.tolist() == [True, True, False]
    with pytest.raises(ConfigurationError):
        profile_onoff(p, eta_h=0.0)


def test_onoff_csv_and_stats():
    s = OnOffSeries(np.array([True, False, True]), 10e-6)
    assert s.to_csv() == "slot,state\n0,ON\n1,OFF\n2,ON\n"
    st_ = s.stats()
    assert st_["fraction"] == pytest.approx(2 / 3) and st_["n_intervals"] == 2
    assert OnOffSeries(np.zeros(3, bool), 1e-5).stats()["median_on_s"] is None


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 20_000), min_size=1, max_size=200), st.floats(1e-6, 50e-6), st.floats(1e-6, 50e-6))
def test_fraction_monotone_in_gamma(Q, g1, g2):
    p = EnergyProfile(Q)
    lo, hi = sorted((g1, g2))
    assert profile_onoff(p, hi).fraction <= profile_onoff(p, lo).fraction


def test_gamma_sweep_keys():
    out = gamma_sweep(bursty_profile())
    assert list(out) == [10e-6, 20e-6, 30e-6, 40e-6]
    fr = [v["fraction"] for v in out.values()]
    assert fr == sorted(fr, reverse=True)


# --------------------------------------------------------------------------
# surrogates


def test_iid_preserves_energy_and_is_seeded():
    p = bursty_profile()
    a, b, c = iid_surrogate(p, 1), iid_surrogate(p, 1), iid_surrogate(p, 2)
    assert a.Q.sum() == p.Q.sum()
    assert np.array_equal(np.sort(a.Q), np.sort(p.Q))
    assert np.array_equal(a.Q, b.Q) and not np.array_equal(a.Q, c.Q)
    assert a.meta == {"surrogate": "iid", "seed": 1, "generator": "PCG64"}


def test_iid_surrogate_passes_runs_test():
    p = bursty_profile()
    assert runs_test(profile_onoff(p)).p < 1e-6
    passed = sum(runs_test(profile_onoff(iid_surrogate(p, seed))).p >= 0.05 for seed in range(100))
    assert passed >= 90


def test_transition_matrix():
    P, rows = transition_matrix([0, 1, 1, 0, 1])
    np.testing.assert_allclose(P, [[0, 1], [0.5, 0.5]])
    assert rows.tolist() == [2, 2]
    P, rows = transition_matrix([1, 1])
    assert np.isnan(P[0]).all() and rows.tolist() == [0, 1]


def test_markov_surrogate_alternating():
    p = EnergyProfile([0, 5000] * 50)
    s = markov_surrogate(p, seed=3)
    np.testing.assert_allclose(s.meta["transition"], [[0, 1], [1, 0]])
    states = s.meta["states"]
    assert np.all(states[1:] != states[:-1])
    assert set(s.Q.tolist()) == {0, 5000}


def test_markov_surrogate_recovers_transitions():
    src = markov_chain(100_000, 0.9, 0.7, seed=5)
    p = EnergyProfile(np.where(src, 4000, 100))
    s = markov_surrogate(p, seed=11)
    P_src, _ = transition_matrix(src)
    P_out, _ = transition_matrix(s.meta["states"])
    np.testing.assert_allclose(P_out, P_src, atol=0.02)
    assert s.meta["seed"] == 11 and not s.meta["degenerate"]


def test_markov_surrogate_means_kept_exactly():
    p = EnergyProfile([0, 1, 3001, 3002, 0, 3004])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = markov_surrogate(p, seed=0)
    assert s.meta["off_mean"] == pytest.approx(1 / 3)
    assert s.meta["on_mean"] == pytest.approx(9007 / 3)
    assert set(s.Q.tolist()) <= {0, 3002}


def test_markov_surrogate_degenerate():
    p = EnergyProfile([5000] * 20)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        s = markov_surrogate(p, seed=0)
    assert s.meta["degenerate"] and s.Q.tolist() == [5000] * 20


def test_markov_surrogate_seeded():
    p = bursty_profile()
    assert np.array_equal(markov_surrogate(p, seed=4).Q, markov_surrogate(p, seed=4).Q)


# --------------------------------------------------------------------------
# runs test


def test_runs_test_rejects_structure():
    alternating = np.tile([0, 1], 100)
    blocks = np.repeat([0, 1, 0, 1], 50)
    assert runs_test(alternating).p < 0.001 and runs_test(alternating).z > 0
    assert runs_test(blocks).p < 0.001 and runs_test(blocks).z < 0


def test_runs_test_accepts_coin_flips():
    passed = 0
    for seed in range(100):
        flips = np.random.default_rng(seed).integers(0, 2, 500)
        passed += runs_test(flips).p >= 0.05
    assert passed >= 90


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=40, max_size=300))
def test_runs_test_matches_reference_and_is_reversal_invariant(seq):
    s = np.array(seq)
    if min(s.sum(), (~s).sum()) < 10:
        with pytest.raises(InsufficientDataError):
            runs_test(s)
        return
    r = runs_test(s)
    z_ref, p_ref = runstest_1samp(s.astype(float), cutoff=0.5, correction=False)
    assert r.z == pytest.approx(z_ref, rel=1e-9, abs=1e-12)
    assert r.p == pytest.approx(p_ref, rel=1e-9, abs=1e-15)
    assert runs_test(s[::-1]).z == pytest.approx(r.z, rel=1e-12, abs=1e-15)


def test_runs_test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        runs_test(np.ones(50))
    with pytest.raises(InsufficientDataError, match="at least 10"):
        runs_test([1] * 9 + [0] * 40)
    assert runs_test(OnOffSeries(np.tile([True, False], 20), 1e-5)).runs == 40


# --------------------------------------------------------------------------
# conditional probabilities


def test_conditional_probs_on_markov_chain():
    c = conditional_probs(markov_chain(50_000, 0.9, 0.7, seed=2))
    assert c.p_on_given_on == pytest.approx(0.7, abs=0.02)
    assert c.p_on_given_off == pytest.approx(0.1, abs=0.02)
    assert abs(c.p_on_given_on_off - c.p_on_given_on) < 0.03
    assert abs(c.p_on_given_on_on - c.p_on_given_on) < 0.03
    assert c.low_confidence == ()


def test_conditional_probs_small_and_constant():
    c = conditional_probs(np.ones(10, bool))
    assert c.p_on_given_on == 1.0 and math.isnan(c.p_on_given_off)
    assert set(c.low_confidence) == {"on", "off", "on_on", "on_off"}
    c = conditional_probs(np.array([False, True, True, False]))
    assert c.counts == {"on": 2, "off": 1, "on_on": 1, "on_off": 1}
    assert c.p_on_given_on_off == 1.0 and c.p_on_given_on_on == 0.0
    d = c.as_dict()
    assert d["p_on_given_off"] == 1.0 and "on" in d["low_confidence"]


def test_duration_correlated_bursts_are_not_markov():
    _, p = burst_profile(3 * 3600, 1, 0.5)
    c = conditional_probs(p)
    assert c.p_on_given_on_off - c.p_on_given_on < -0.1
    assert c.counts["on_off"] >= 30


def test_on_fraction_and_median_recovered():
    meta, p = burst_profile(3 * 3600, 1, 0.0)
    s = profile_onoff(p)
    assert abs(s.fraction - meta["on_fraction"]) <= 0.01
    built = np.median([b[1] for b in meta["bursts"]])
    assert abs(s.median_on - built) <= 1


# --------------------------------------------------------------------------
# policies on surrogates


def test_scheme_lb_depends_on_capacity_only_for_bursty_input():
    """A permuted profile feeds the storage evenly so capacity barely matters."""
    _, p = burst_profile(3 * 3600, 0, 0.0)
    q = iid_surrogate(p, 0)

    def rates(profile):
        out = []
        for C in (300_000, 3_000_000, 30_000_000):
            inst = EAInstance(profile, StorageModel("battery", C), SpendingSet.packets())
            out.append(rate_kbps(scheme_lb(inst).s))
        return out

    measured, shuffled = rates(p), rates(q)
    assert measured[-1] / measured[0] > 1.5
    assert shuffled[-1] / shuffled[0] < 1.15
