"""Is harvested energy independent from slot to slot?  Is it Markov?

Compares six hours of synthetic walking energy with two surrogates
sharing its statistics: a random shuffle (independent slots) and a
two-state Markov chain fitted to its ON/OFF sequence.  The measured
process fails the runs test, and when short bursts are mixed with long
bouts its second-order ON probabilities disagree with the first-order
ones, which no Markov chain can produce.  Storage sizing then matters far
more for the measured profile than for the shuffle.

    python demos/burstiness.py
"""

from kinharvest import (
    H1,
    EAInstance,
    SpendingSet,
    StorageModel,
    SynthSpec,
    conditional_probs,
    iid_surrogate,
    markov_surrogate,
    preprocess,
    profile_onoff,
    runs_test,
    scheme_lb,
    simulate,
    slots_from_power,
    synth_trace,
)
from kinharvest.allocator import rate_kbps

trace = synth_trace(SynthSpec(kind="burst-walk", duration=6 * 3600, on_fraction=0.1, seed=1, blip_fraction=0.5))
measured = slots_from_power(simulate(H1, preprocess(trace)).power)
profiles = {
    "measured": measured,
    "iid": iid_surrogate(measured, seed=0),
    "markov": markov_surrogate(measured, seed=0),
}

print(f"{'profile':>9} {'ON %':>6} {'runs z':>8} {'p(ON|ON)':>9} {'p(ON|ON,OFF)':>13}")
for name, p in profiles.items():
    states = profile_onoff(p, eta_h=0.2)
    c = conditional_probs(states)
    print(f"{name:>9} {100 * states.fraction:>6.1f} {runs_test(states).z:>8.1f} "
          f"{c.p_on_given_on:>9.3f} {c.p_on_given_on_off:>13.3f}")

print("\nScheme-LB mean rate (Kb/s) against battery size")
sizes_mJ = (0.3, 1, 3, 10, 30)
print(f"{'profile':>9} " + " ".join(f"{c:>7}mJ" for c in sizes_mJ))
for name, p in profiles.items():
    rates = []
    for c in sizes_mJ:
        inst = EAInstance(p, StorageModel("battery", int(c * 1e6)), SpendingSet.packets())
        rates.append(rate_kbps(scheme_lb(inst).s))
    print(f"{name:>9} " + " ".join(f"{r:>9.3f}" for r in rates))
