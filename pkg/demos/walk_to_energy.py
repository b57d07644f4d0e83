"""From a walking trace to a data-rate budget.

Synthesizes half an hour of intermittent walking, tunes a harvester to it,
and reports how much energy a node could spend per second.

    python demos/walk_to_energy.py
"""

from kinharvest import (
    H1,
    SynthSpec,
    abs_deviation,
    data_rate,
    dominant_frequency,
    preprocess,
    profile_onoff,
    simulate,
    slots_from_power,
    synth_trace,
    tune,
)

trace = synth_trace(SynthSpec(kind="burst-walk", duration=1800, on_fraction=0.15, seed=2))
accel = preprocess(trace)
print(f"motion: D = {abs_deviation(accel):.3f} m/s^2, f_m = {dominant_frequency(accel):.2f} Hz")

# a short trace gets the exhaustive grid; long ones switch to f_r = f_m
tuned = tune(accel, method="exhaustive", fr_grid=[1.0, 1.5, 2.0, 2.5, 3.0])
for name, design in (("H1", H1), ("tuned", tuned.best)):
    sim = simulate(design, accel)
    print(f"{name:>5}: f_r = {design.f_r:.2f} Hz, Q = {design.Q:.2f}, "
          f"P = {sim.avg_power * 1e6:.2f} uW -> {data_rate(sim.avg_power):.2f} Kb/s")

profile = slots_from_power(simulate(tuned.best, accel).power, T_int=1.0, eta_h=0.2)
onoff = profile_onoff(profile)
print(f"slots: {len(profile)}, harvested {profile.Q.sum() / 1e6:.2f} mJ, "
      f"ON {100 * onoff.fraction:.1f}% of the time, median ON interval {onoff.median_on:.0f} s")
