"""Acceleration traces: loading, synthesis, preprocessing and motion descriptors.

Traces are uniformly sampled triaxial accelerations in m/s^2.  The motion
descriptors computed here are the mean absolute deviation ``D`` of the
acceleration magnitude and its dominant frequency ``f_m``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
from scipy import signal

from .errors import (
    ConfigurationError,
    EmptyInputError,
    InsufficientDataError,
    TraceFormatError,
)

G = 9.80665
DEFAULT_FS = 100.0
TRACE_HEADER = ("t", "ax", "ay", "az")
# walking band used by the burst-walk generator
WALK_BAND = (1.92, 2.8)
BLIP_S = 0.5  # driven time of a one-slot burst


def _frozen(arr, ndim):
    arr = np.array(arr, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarSeries:
    """A uniformly sampled one-dimensional signal."""

    fs: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.fs > 0:
            raise ConfigurationError(f"sampling rate must be positive, got {self.fs}")
        values = _frozen(self.values, 1)
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def duration(self) -> float:
        return len(self.values) / self.fs

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.values)) / self.fs

    def with_values(self, values) -> "ScalarSeries":
        return ScalarSeries(self.fs, values, self.t0)

    def window(self, start: int, stop: int) -> "ScalarSeries":
        return ScalarSeries(self.fs, self.values[start:stop], self.t0 + start / self.fs)


@dataclass(frozen=True)
class AccelTrace:
    """Triaxial acceleration samples, shape ``(n, 3)``, in m/s^2."""

    fs: float
    samples: np.ndarray
    t0: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.fs > 0:
            raise ConfigurationError(f"sampling rate must be positive, got {self.fs}")
        samples = _frozen(self.samples, 2)
        if samples.shape[1] != 3 or samples.shape[0] < 1:
            raise ValueError(f"samples must have shape (n>=1, 3), got {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trace contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.fs


# --------------------------------------------------------------------------
# CSV I/O


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def load_trace(
    source,
    fs: float | None = None,
    units: str = "m/s2",
    columns: Iterable[str] = TRACE_HEADER,
    time_scale: float = 1.0,
    max_jitter: float = 0.01,
) -> AccelTrace:
    """Read a ``t,ax,ay,az`` CSV trace.

    ``source`` is a path or a text stream.  When ``fs`` is omitted it is
    inferred from the median timestamp step.  Timestamps may deviate from a
    uniform grid by at most ``max_jitter`` of a sample period per step; the
    accepted samples are re-indexed to uniform spacing.  ``columns`` renames
    the four expected header fields for datasets with a different header and
    ``time_scale`` converts the time column to seconds (e.g. 1e-3 for ms).
    """
    if units not in ("m/s2", "g"):
        raise ConfigurationError(f"unknown units {units!r}; use 'm/s2' or 'g'")
    columns = tuple(columns)
    if len(columns) != 4:
        raise ConfigurationError("columns must name exactly t, ax, ay, az")

    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        header = None
        for header in reader:
            if header and any(cell.strip() for cell in header):
                break
        else:
            header = None
        if header is None:
            raise EmptyInputError("empty trace file")
        header = [h.strip().lstrip("﻿") for h in header]
        try:
            idx = [header.index(c) for c in columns]
        except ValueError:
            raise TraceFormatError(
                f"header must contain {','.join(columns)}, got {','.join(header)}", line=1
            ) from None

        rows = []
        for row in reader:
            line = reader.line_num
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(row)}", line=line)
            try:
                values = [float(row[i]) for i in idx]
            except ValueError:
                raise TraceFormatError(f"non-numeric field in {row!r}", line=line) from None
            if not all(math.isfinite(v) for v in values):
                raise TraceFormatError("non-finite sample", line=line)
            rows.append((line, values))
    finally:
        if owned:
            stream.close()

    if not rows:
        raise EmptyInputError("trace file has a header but no samples")

    lines = [r[0] for r in rows]
    data = np.array([r[1] for r in rows], dtype=float)
    t = data[:, 0] * time_scale
    steps = np.diff(t)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise TraceFormatError("timestamps are not strictly increasing", line=lines[bad[0] + 1])

    if fs is None:
        fs = round(1.0 / float(np.median(steps)), 6) if steps.size else DEFAULT_FS
    if not fs > 0:
        raise ConfigurationError(f"sampling rate must be positive, got {fs}")
    if steps.size:
        dt = 1.0 / fs
        jitter = np.abs(steps - dt) / dt
        over = np.flatnonzero(jitter > max_jitter)
        if over.size:
            k = int(over[0])
            raise TraceFormatError(
                f"timestamp step {steps[k]:.6g} s deviates {jitter[k]:.1%} from 1/fs = {dt:.6g} s",
                line=lines[k + 1],
            )

    accel = data[:, 1:]
    if units == "g":
        accel = accel * G
    return AccelTrace(fs=float(fs), samples=accel, t0=float(t[0]))


def save_trace(trace: AccelTrace, dest) -> None:
    """Write ``trace`` as ``t,ax,ay,az`` CSV with round-trip float precision."""
    stream, owned = (open(dest, "w", newline="", encoding="utf-8"), True) if isinstance(
        dest, (str, os.PathLike)
    ) else (dest, False)
    try:
        stream.write(",".join(TRACE_HEADER) + "\n")
        t = trace.t0 + np.arange(len(trace)) / trace.fs
        for ti, (ax, ay, az) in zip(t.tolist(), trace.samples.tolist()):
            stream.write(f"{ti!r},{ax!r},{ay!r},{az!r}\n")
    finally:
        if owned:
            stream.close()


def save_series(series: ScalarSeries, dest, header: str = "value") -> None:
    stream, owned = (open(dest, "w", newline="", encoding="utf-8"), True) if isinstance(
        dest, (str, os.PathLike)
    ) else (dest, False)
    try:
        stream.write(f"t,{header}\n")
        for ti, v in zip(series.times.tolist(), series.values.tolist()):
            stream.write(f"{ti!r},{v!r}\n")
    finally:
        if owned:
            stream.close()


def trace_to_csv(trace: AccelTrace) -> str:
    buf = io.StringIO()
    save_trace(trace, buf)
    return buf.getvalue()


# --------------------------------------------------------------------------
# preprocessing and descriptors


def magnitude(trace: AccelTrace) -> ScalarSeries:
    """Euclidean norm of each sample."""
    return ScalarSeries(trace.fs, np.linalg.norm(trace.samples, axis=1), trace.t0)


def butter_highpass_sos(fs: float, order: int = 3, cutoff: float = 0.1) -> np.ndarray:
    if not fs > 2 * cutoff:
        raise ConfigurationError(
            f"sampling rate {fs} Hz must exceed twice the cutoff ({cutoff} Hz)"
        )
    if order < 1 or cutoff <= 0:
        raise ConfigurationError("order must be >= 1 and cutoff > 0")
    # butter() prewarps the cutoff before the bilinear transform
    return signal.butter(order, cutoff, btype="highpass", fs=fs, output="sos")


def highpass(series: ScalarSeries, order: int = 3, cutoff: float = 0.1) -> ScalarSeries:
    """Causal Butterworth high-pass filter.

    The filter state starts at the steady state for the first sample, as if
    the signal had been constant before recording began; otherwise the
    gravity offset enters as a step and rings through the harvester.
    """
    sos = butter_highpass_sos(series.fs, order, cutoff)
    x = series.values
    zi = signal.sosfilt_zi(sos) * x[0]
    y, _ = signal.sosfilt(sos, x, zi=zi)
    return series.with_values(y)


def highpass_gain(f, fs: float, order: int = 3, cutoff: float = 0.1):
    """Closed-form magnitude response of the discretized Butterworth high-pass.

    Under the bilinear map with prewarping the analog response
    ``1/sqrt(1 + (wc/w)^(2n))`` becomes a function of ``tan(pi f / fs)``.
    """
    f = np.asarray(f, dtype=float)
    ratio = np.tan(np.pi * cutoff / fs) / np.tan(np.pi * f / fs)
    return 1.0 / np.sqrt(1.0 + ratio ** (2 * order))


def preprocess(trace: AccelTrace, order: int = 3, cutoff: float = 0.1) -> ScalarSeries:
    """Magnitude followed by the gravity-removing high-pass filter."""
    return highpass(magnitude(trace), order, cutoff)


def abs_deviation(series: ScalarSeries) -> float:
    """Mean absolute deviation of the series about its mean, in m/s^2."""
    x = series.values
    if len(x) < 2:
        raise InsufficientDataError("absolute deviation needs at least 2 samples")
    return float(np.mean(np.abs(x - x.mean())))


def dominant_frequency(series: ScalarSeries, min_duration: float = 2.0) -> float | None:
    """Frequency of the largest non-DC spectral component, in Hz.

    The series mean is removed and the result Hann-windowed before the FFT.  Returns
    ``None`` when the series carries no variation at all.
    """
    x = series.values
    if len(x) < 2 or series.duration < min_duration:
        raise InsufficientDataError(
            f"need at least {min_duration} s of data for 1/{min_duration} Hz resolution, "
            f"got {series.duration:g} s"
        )
    x = x - x.mean()
    scale = np.max(np.abs(series.values))
    if not np.any(np.abs(x) > 1e-12 * max(scale, 1.0)):
        return None
    spectrum = np.abs(np.fft.rfft(x * signal.windows.hann(len(x), sym=False)))
    spectrum[0] = -1.0
    k = int(np.argmax(spectrum))  # first maximum: ties go to the lower bin
    return k * series.fs / len(x)


# --------------------------------------------------------------------------
# synthetic traces


@dataclass(frozen=True)
class SynthSpec:
    """Parameters for :func:`synth_trace`.

    ``kind`` is ``"sine"`` (a continuous tone on the z axis) or
    ``"burst-walk"`` (sine bursts separated by rest).  For burst-walk,
    ``freq=None`` draws each burst's frequency from the walking band;
    ``on_fraction`` of the whole-second duration is spent in bursts.
    Bout lengths are lognormal with the given median; ``blip_fraction`` of
    the bursts are instead blips: one-second slots in which only the first
    half second is driven, so the harvester's ringdown stays inside the slot.
    """

    kind: str = "sine"
    amplitude: float = 3.0
    freq: float | None = None
    duration: float = 10.0
    on_fraction: float = 0.1
    seed: int = 0
    fs: float = DEFAULT_FS
    bout_median: float = 15.0
    bout_sigma: float = 0.8
    blip_fraction: float = 0.0

    def validate(self):
        if self.kind not in ("sine", "burst-walk"):
            raise ConfigurationError(f"unknown synth kind {self.kind!r}")
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        if not 0.0 <= self.on_fraction <= 1.0:
            raise ConfigurationError("on_fraction must lie in [0, 1]")
        if self.amplitude < 0 or not math.isfinite(self.amplitude):
            raise ConfigurationError("amplitude must be finite and non-negative")
        if self.freq is not None and not self.freq > 0:
            raise ConfigurationError("freq must be positive")
        if not self.fs > 0:
            raise ConfigurationError("fs must be positive")
        if self.freq is not None and self.freq >= self.fs / 2:
            raise ConfigurationError("freq must be below the Nyquist frequency")
        if not 0.0 <= self.blip_fraction <= 1.0:
            raise ConfigurationError("blip_fraction must lie in [0, 1]")
        if not (self.bout_median > 0 and self.bout_sigma >= 0):
            raise ConfigurationError("bout_median must be positive and bout_sigma >= 0")


def _burst_schedule(spec: SynthSpec, rng: np.random.Generator):
    """Whole-second (start, length, freq) bursts covering exactly the ON time."""
    total = int(round(spec.duration))
    on_total = int(round(spec.on_fraction * total))
    lengths = []
    while sum(lengths) < on_total:
        if rng.random() < spec.blip_fraction:
            n = 1
        else:
            n = max(2, int(round(spec.bout_median * math.exp(spec.bout_sigma * rng.standard_normal()))))
        lengths.append(min(n, on_total - sum(lengths)))
    off_total = total - on_total
    n = len(lengths)
    if n == 0:
        return []
    # inner gaps of at least 2 s keep bursts distinct; the rest is spread
    # with Dirichlet weights so rest periods vary widely in length
    min_gap = 2 if off_total >= 2 * (n - 1) else 0
    spare = off_total - min_gap * (n - 1)
    weights = rng.dirichlet(np.full(n + 1, 0.5))
    gaps = rng.multinomial(spare, weights)
    gaps[1:-1] += min_gap
    bursts = []
    t = int(gaps[0])
    for i, length in enumerate(lengths):
        f = spec.freq if spec.freq is not None else float(rng.uniform(*WALK_BAND))
        bursts.append((t, length, f))
        t += length + int(gaps[i + 1])
    return bursts


def synth_trace(spec: SynthSpec | dict) -> AccelTrace:
    """Deterministic synthetic acceleration trace for tests and demos."""
    if isinstance(spec, dict):
        spec = SynthSpec(**spec)
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    if spec.kind == "sine":
        freq = 2.0 if spec.freq is None else spec.freq
        n = int(round(spec.duration * spec.fs))
        t = np.arange(n) / spec.fs
        az = G + spec.amplitude * np.sin(2 * np.pi * freq * t)
        meta = {"kind": "sine", "freq": freq, "seed": spec.seed}
    else:
        n = int(round(int(round(spec.duration)) * spec.fs))
        t = np.arange(n) / spec.fs
        az = np.full(n, G)
        bursts = _burst_schedule(spec, rng)
        for start, length, f in bursts:
            driven = BLIP_S if length == 1 else length
            i0, i1 = int(round(start * spec.fs)), int(round((start + driven) * spec.fs))
            az[i0:i1] += spec.amplitude * np.sin(2 * np.pi * f * (t[i0:i1] - start))
        on = sum(b[1] for b in bursts)
        meta = {
            "kind": "burst-walk",
            "seed": spec.seed,
            "bursts": bursts,
            "on_fraction": on / max(1, int(round(spec.duration))),
        }
    samples = np.column_stack([np.zeros(n), np.zeros(n), az])
    return AccelTrace(fs=spec.fs, samples=samples, meta=meta)
