"""Inertial (mass-spring-damper) harvester model.

The proof-mass displacement obeys

    z'' + (w_r / Q) z' + w_r^2 z = a(t),   w_r = 2 pi f_r,

the displacement is limited to +/- Z_L and the harvested power is
``P = b (dz/dt)^2``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import signal

from .errors import AccuracyError, ConfigurationError
from .trace import ScalarSeries

DEFAULT_MASS = 1e-3  # kg
DEFAULT_ZL = 10e-3  # m
MIN_SAMPLES_PER_PERIOD = 20


@dataclass(frozen=True)
class HarvesterDesign:
    m: float = DEFAULT_MASS
    Z_L: float = DEFAULT_ZL
    k: float = 0.17
    b: float = 0.0055

    def __post_init__(self):
        for name in ("m", "Z_L", "k", "b"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigurationError(f"{name} must be positive, got {v}")

    @classmethod
    def from_resonance(cls, f_r, b=None, Q=None, m=DEFAULT_MASS, Z_L=DEFAULT_ZL):
        """Design with resonant frequency ``f_r`` and either ``b`` or ``Q``."""
        if (b is None) == (Q is None):
            raise ConfigurationError("give exactly one of b or Q")
        k = spring_constant(f_r, m)
        if b is None:
            b = math.sqrt(k * m) / Q
        return cls(m=m, Z_L=Z_L, k=k, b=b)

    @property
    def f_r(self) -> float:
        return resonant_frequency(self)

    @property
    def Q(self) -> float:
        return quality_factor(self)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "HarvesterDesign":
        d = json.loads(text)
        return cls(**{k: float(d[k]) for k in ("m", "Z_L", "k", "b")})


# walking- and running-tuned reference designs
H1 = HarvesterDesign(k=0.17, b=0.0055)
H2 = HarvesterDesign(k=0.30, b=0.0045)


def spring_constant(f_r: float, m: float = DEFAULT_MASS) -> float:
    """k such that sqrt(k/m) / (2 pi) == f_r."""
    return m * (2 * math.pi * f_r) ** 2


def resonant_frequency(design: HarvesterDesign) -> float:
    return math.sqrt(design.k / design.m) / (2 * math.pi)


def quality_factor(design: HarvesterDesign) -> float:
    return math.sqrt(design.k * design.m) / design.b


@dataclass(frozen=True)
class SimResult:
    displacement: ScalarSeries
    power: ScalarSeries
    avg_power: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,z_m,p_W\n")
        for t, z, p in zip(
            self.power.times.tolist(), self.displacement.values.tolist(), self.power.values.tolist()
        ):
            buf.write(f"{t!r},{z!r},{p!r}\n")
        return buf.getvalue()


def _rk4_step_matrices(w_r: float, Q: float, h: float):
    """One RK4 step of the linear oscillator as x' = Phi x + g0 u0 + gm um + g1 u1.

    RK4 applied to a linear time-invariant system is itself linear in the
    state and in the three input samples it reads (start, midpoint, end), so
    the step can be tabulated once and the whole run becomes a fixed IIR
    recurrence.
    """
    A = np.array([[0.0, 1.0], [-(w_r**2), -w_r / Q]])
    B = np.array([0.0, 1.0])

    def step(x, u0, um, u1):
        k1 = A @ x + B * u0
        k2 = A @ (x + 0.5 * h * k1) + B * um
        k3 = A @ (x + 0.5 * h * k2) + B * um
        k4 = A @ (x + h * k3) + B * u1
        return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    zero = np.zeros(2)
    Phi = np.column_stack([step(e, 0, 0, 0) for e in np.eye(2)])
    g0 = step(zero, 1, 0, 0)
    gm = step(zero, 0, 1, 0)
    g1 = step(zero, 0, 0, 1)
    return Phi, g0, gm, g1


def _midpoints(u: np.ndarray) -> np.ndarray:
    """Input at half-sample offsets by 4-point cubic interpolation."""
    n = len(u)
    mid = np.empty(max(n - 1, 0))
    if n < 2:
        return mid
    mid[:] = 0.5 * (u[:-1] + u[1:])
    if n >= 4:
        mid[1:-1] = (-u[:-3] + 9 * u[1:-2] + 9 * u[2:-1] - u[3:]) / 16.0
    return mid


def displacement(design: HarvesterDesign, accel: ScalarSeries) -> np.ndarray:
    """Unclipped proof-mass displacement by fixed-step RK4 at the sample rate."""
    f_r = resonant_frequency(design)
    if accel.fs < MIN_SAMPLES_PER_PERIOD * f_r:
        raise AccuracyError(
            f"sampling rate {accel.fs} Hz is below {MIN_SAMPLES_PER_PERIOD} x f_r "
            f"({MIN_SAMPLES_PER_PERIOD * f_r:.3g} Hz)"
        )
    u = accel.values
    n = len(u)
    if n < 2:
        return np.zeros(n)
    Phi, g0, gm, g1 = _rk4_step_matrices(2 * math.pi * f_r, quality_factor(design), 1.0 / accel.fs)
    C = np.array([[1.0, 0.0]])
    # inputs for steps 0..n-2; the trailing pad only affects the state after the last output
    u_start = u
    u_mid = np.append(_midpoints(u), 0.0)
    u_end = np.append(u[1:], 0.0)
    z = np.zeros(n)
    for g, w in ((g0, u_start), (gm, u_mid), (g1, u_end)):
        num, den = signal.ss2tf(Phi, g.reshape(2, 1), C, np.zeros((1, 1)))
        z += signal.lfilter(num[0], den, w)
    return z


def simulate(design: HarvesterDesign, accel: ScalarSeries) -> SimResult:
    """Drive the harvester with a gravity-free acceleration signal.

    The displacement is clipped to ``[-Z_L, Z_L]`` after integration (the
    integrator state itself is not limited), differentiated by central
    differences, and converted to power ``b * v^2``.
    """
    z = np.clip(displacement(design, accel), -design.Z_L, design.Z_L)
    if len(z) >= 2:
        v = np.gradient(z, 1.0 / accel.fs)
    else:
        v = np.zeros_like(z)
    p = design.b * v * v
    return SimResult(
        displacement=accel.with_values(z),
        power=accel.with_values(p),
        avg_power=float(p.mean()),
    )


def steady_state_power(design: HarvesterDesign, amplitude: float, freq: float) -> float:
    """Average power for a sinusoidal drive in the unclipped linear regime.

    Valid only while the displacement amplitude stays below ``Z_L``; the
    caller is responsible for checking that.
    """
    w = 2 * math.pi * freq
    w_r = 2 * math.pi * resonant_frequency(design)
    Q = quality_factor(design)
    return 0.5 * design.b * w**2 * amplitude**2 / ((w_r**2 - w**2) ** 2 + (w_r * w / Q) ** 2)


def steady_state_amplitude(design: HarvesterDesign, amplitude: float, freq: float) -> float:
    """Displacement amplitude of the unclipped steady-state response."""
    w = 2 * math.pi * freq
    w_r = 2 * math.pi * resonant_frequency(design)
    Q = quality_factor(design)
    return amplitude / math.sqrt((w_r**2 - w**2) ** 2 + (w_r * w / Q) ** 2)
