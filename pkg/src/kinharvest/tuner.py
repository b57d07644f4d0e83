"""Harvester parameter search and the power-to-data-rate conversion."""

from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, NoDominantFrequencyError
from .harvester import DEFAULT_MASS, DEFAULT_ZL, HarvesterDesign, simulate, spring_constant
from .trace import ScalarSeries, dominant_frequency

ETA_H = 0.2
C_TX = 1e-9  # J/bit
# inputs longer than this default to the frequency-matched search
LONG_TRACE_S = 600.0


def default_fr_grid() -> np.ndarray:
    return np.round(np.arange(0.5, 10.0 + 1e-9, 0.05), 10)


def default_b_grid() -> np.ndarray:
    return np.geomspace(1e-4, 2e-2, 30)


@dataclass(frozen=True)
class TuneResult:
    best: HarvesterDesign
    avg_power: float
    surface: np.ndarray  # rows of (f_r, b, avg_power)

    def surface_csv(self) -> str:
        buf = io.StringIO()
        buf.write("f_r,b,avg_power_uW\n")
        for f_r, b, p in self.surface.tolist():
            buf.write(f"{f_r!r},{b!r},{p * 1e6!r}\n")
        return buf.getvalue()


def _power_at(args):
    accel, f_r, b, m, Z_L = args
    design = HarvesterDesign(m=m, Z_L=Z_L, k=spring_constant(f_r, m), b=b)
    return simulate(design, accel).avg_power


def _select(surface: np.ndarray) -> int:
    """Index of the maximum power; ties go to lower b, then lower f_r."""
    order = np.lexsort((surface[:, 0], surface[:, 1], -surface[:, 2]))
    return int(order[0])


def exhaustive_search(
    accel: ScalarSeries,
    fr_grid=None,
    b_grid=None,
    m: float = DEFAULT_MASS,
    Z_L: float = DEFAULT_ZL,
    workers: int = 1,
) -> TuneResult:
    """Simulate every (f_r, b) pair and keep the one with the highest mean power."""
    fr_grid = default_fr_grid() if fr_grid is None else np.asarray(fr_grid, dtype=float)
    b_grid = default_b_grid() if b_grid is None else np.asarray(b_grid, dtype=float)
    if fr_grid.size == 0 or b_grid.size == 0:
        raise ConfigurationError("search grid is empty")
    if np.any(fr_grid <= 0) or np.any(b_grid <= 0):
        raise ConfigurationError("grid values must be positive")

    pairs = [(f, b) for f in fr_grid for b in b_grid]
    jobs = [(accel, f, b, m, Z_L) for f, b in pairs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            powers = list(pool.map(_power_at, jobs, chunksize=16))
    else:
        powers = [_power_at(j) for j in jobs]

    surface = np.column_stack([np.array(pairs).reshape(-1, 2), np.array(powers)])
    i = _select(surface)
    f_r, b, p = surface[i]
    best = HarvesterDesign(m=m, Z_L=Z_L, k=spring_constant(f_r, m), b=b)
    return TuneResult(best=best, avg_power=float(p), surface=surface)


def frequency_matched_search(
    accel: ScalarSeries,
    b_grid=None,
    m: float = DEFAULT_MASS,
    Z_L: float = DEFAULT_ZL,
) -> TuneResult:
    """Match f_r to the dominant motion frequency, then scan b only."""
    f_m = dominant_frequency(accel)
    if f_m is None:
        raise NoDominantFrequencyError("acceleration has no dominant frequency")
    return exhaustive_search(accel, [f_m], b_grid, m=m, Z_L=Z_L)


def tune(accel: ScalarSeries, method: str = "auto", **kwargs) -> TuneResult:
    if method == "auto":
        method = "matched" if accel.duration > LONG_TRACE_S else "exhaustive"
    if method == "exhaustive":
        return exhaustive_search(accel, **kwargs)
    if method == "matched":
        kwargs.pop("fr_grid", None)
        kwargs.pop("workers", None)
        return frequency_matched_search(accel, **kwargs)
    raise ConfigurationError(f"unknown tuning method {method!r}")


def data_rate(avg_power: float, eta_h: float = ETA_H, c_tx: float = C_TX) -> float:
    """Sustainable data rate in Kb/s for a mean harvested power in W."""
    if avg_power < 0:
        raise DomainError(f"power must be non-negative, got {avg_power}")
    if not c_tx > 0 or not 0 <= eta_h <= 1:
        raise ConfigurationError("need c_tx > 0 and 0 <= eta_h <= 1")
    return eta_h * avg_power / c_tx / 1e3
