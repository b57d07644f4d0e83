import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from kinharvest.errors import AccuracyError, ConfigurationError
from kinharvest.harvester import (
    H1,
    H2,
    HarvesterDesign,
    displacement,
    quality_factor,
    resonant_frequency,
    simulate,
    spring_constant,
    steady_state_amplitude,
    steady_state_power,
)
from kinharvest.trace import ScalarSeries


def drive(freq, amp, duration, fs=100.0):
    t = np.arange(int(round(duration * fs))) / fs
    return ScalarSeries(fs, amp * np.sin(2 * np.pi * freq * t))


def rk4_loop(design, u, fs):
    """Scalar RK4 with cubic midpoint inputs, written out step by step."""
    w = 2 * math.pi * resonant_frequency(design)
    Q = quality_factor(design)
    h = 1.0 / fs
    n = len(u)

    def mid(k):
        if 1 <= k <= n - 3:
            return (-u[k - 1] + 9 * u[k] + 9 * u[k + 1] - u[k + 2]) / 16.0
        return 0.5 * (u[k] + u[k + 1])

    def f(z, v, a):
        return v, a - (w / Q) * v - w * w * z

    z, v = 0.0, 0.0
    out = [0.0]
    for k in range(n - 1):
        a0, am, a1 = u[k], mid(k), u[k + 1]
        k1 = f(z, v, a0)
        k2 = f(z + h / 2 * k1[0], v + h / 2 * k1[1], am)
        k3 = f(z + h / 2 * k2[0], v + h / 2 * k2[1], am)
        k4 = f(z + h * k3[0], v + h * k3[1], a1)
        z += h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v += h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        out.append(z)
    return np.array(out)


def test_reference_designs():
    assert H1.f_r == pytest.approx(2.06, rel=0.015)
    assert H1.Q == pytest.approx(2.35, rel=0.015)
    assert H2.f_r == pytest.approx(2.77, rel=0.015)
    assert H2.Q == pytest.approx(3.87, rel=0.015)


@given(st.floats(0.3, 10.0), st.floats(0.3, 50.0), st.floats(1e-4, 1e-1))
def test_resonance_round_trip(f_r, Q, m):
    d = HarvesterDesign.from_resonance(f_r, Q=Q, m=m)
    assert d.f_r == pytest.approx(f_r, rel=1e-12)
    assert d.Q == pytest.approx(Q, rel=1e-12)
    assert spring_constant(d.f_r, m) == pytest.approx(d.k, rel=1e-12)


def test_design_validation_and_json():
    with pytest.raises(ConfigurationError):
        HarvesterDesign(b=0.0)
    with pytest.raises(ConfigurationError):
        HarvesterDesign.from_resonance(2.0)
    assert HarvesterDesign.from_json(H2.to_json()) == H2
    assert set(json.loads(H1.to_json())) == {"m", "Z_L", "k", "b"}


def test_recurrence_matches_step_by_step_rk4():
    rng = np.random.default_rng(0)
    u = rng.normal(size=400)
    d = HarvesterDesign.from_resonance(2.3, Q=3.0)
    z = displacement(d, ScalarSeries(100.0, u))
    np.testing.assert_allclose(z, rk4_loop(d, u, 100.0), rtol=1e-9, atol=1e-12)


def test_integration_matches_adaptive_solver():
    d = HarvesterDesign.from_resonance(2.0, Q=4.0, Z_L=math.inf)
    f, A, fs = 1.7, 2.0, 100.0
    accel = drive(f, A, 10.0, fs)
    z = displacement(d, accel)
    w, Q = 2 * math.pi * 2.0, 4.0
    sol = solve_ivp(
        lambda t, y: [y[1], A * math.sin(2 * math.pi * f * t) - w / Q * y[1] - w * w * y[0]],
        (0, accel.duration), [0.0, 0.0], t_eval=accel.times, rtol=1e-11, atol=1e-13, method="DOP853",
    )
    scale = np.max(np.abs(sol.y[0]))
    np.testing.assert_allclose(z, sol.y[0], atol=1e-4 * scale)


@pytest.mark.parametrize("f_r, Q", [(1.0, 2.0), (2.06, 2.35), (3.0, 6.0)])
def test_power_at_resonance_closed_form(f_r, Q):
    d = HarvesterDesign.from_resonance(f_r, Q=Q, Z_L=math.inf)
    A = 0.5
    res = simulate(d, drive(f_r, A, 60.0))
    p = res.power.values[3000:]
    w = 2 * math.pi * f_r
    expected = 0.5 * d.b * A**2 * Q**2 / w**2
    assert expected == pytest.approx(steady_state_power(d, A, f_r), rel=1e-12)
    assert p.mean() == pytest.approx(expected, rel=0.05)


def test_mass_scaling_in_linear_regime():
    accel = drive(2.0, 1.0, 20.0)
    base = HarvesterDesign.from_resonance(2.2, Q=3.0, m=1e-3, Z_L=math.inf)
    double = HarvesterDesign.from_resonance(2.2, Q=3.0, m=2e-3, Z_L=math.inf)
    ratio = simulate(double, accel).avg_power / simulate(base, accel).avg_power
    assert ratio == pytest.approx(2.0, abs=1e-6)


def test_clipping_bounds_displacement():
    d = HarvesterDesign.from_resonance(2.0, Q=10.0, Z_L=5e-3)
    accel = drive(2.0, 5.0, 20.0)
    assert steady_state_amplitude(d, 5.0, 2.0) > d.Z_L
    res = simulate(d, accel)
    assert np.max(np.abs(res.displacement.values)) == pytest.approx(d.Z_L)
    free = simulate(HarvesterDesign(m=d.m, Z_L=math.inf, k=d.k, b=d.b), accel)
    assert res.avg_power < free.avg_power


def test_sweep_peaks_at_resonance():
    d = HarvesterDesign.from_resonance(2.5, Q=5.0, Z_L=math.inf)
    freqs = np.round(np.arange(1.0, 4.01, 0.1), 10)
    powers = [simulate(d, drive(f, 0.3, 40.0)).power.values[2000:].mean() for f in freqs]
    assert abs(freqs[int(np.argmax(powers))] - 2.5) <= 0.1 + 1e-9


def test_sampling_rate_guard():
    with pytest.raises(AccuracyError):
        simulate(HarvesterDesign.from_resonance(8.0, Q=2.0), drive(2.0, 1.0, 5.0, fs=100.0))


def test_short_inputs():
    res = simulate(H1, ScalarSeries(100.0, [1.0]))
    assert res.avg_power == 0.0 and len(res.power) == 1


def test_power_is_b_times_velocity_squared():
    res = simulate(H1, drive(2.0, 1.0, 10.0))
    v = np.gradient(res.displacement.values, 0.01)
    np.testing.assert_allclose(res.power.values, H1.b * v * v)
    assert res.to_csv().startswith("t,z_m,p_W\n0.0,")


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.1, 5.0))
def test_power_non_negative_and_quadratic_in_amplitude(f, A):
    d = HarvesterDesign.from_resonance(2.0, Q=3.0, Z_L=math.inf)
    p1 = simulate(d, drive(f, A, 5.0)).avg_power
    p2 = simulate(d, drive(f, 2 * A, 5.0)).avg_power
    assert p1 >= 0
    assert p2 == pytest.approx(4 * p1, rel=1e-9)
