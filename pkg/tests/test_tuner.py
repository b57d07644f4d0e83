import numpy as np
import pytest

from kinharvest.errors import ConfigurationError, DomainError, NoDominantFrequencyError
from kinharvest.trace import ScalarSeries
from kinharvest.tuner import (
    _select,
    data_rate,
    default_b_grid,
    default_fr_grid,
    exhaustive_search,
    frequency_matched_search,
    tune,
)


def drive(freq, amp=3.0, duration=20.0, fs=100.0):
    t = np.arange(int(duration * fs)) / fs
    return ScalarSeries(fs, amp * np.sin(2 * np.pi * freq * t))


def test_data_rate_examples():
    assert data_rate(202.4e-6) == pytest.approx(40.48)
    assert data_rate(813.3e-6) == pytest.approx(162.66)
    assert data_rate(0.0) == 0.0


def test_data_rate_errors():
    with pytest.raises(DomainError):
        data_rate(-1e-6)
    with pytest.raises(ConfigurationError):
        data_rate(1e-6, c_tx=0)


def test_default_grids():
    fr = default_fr_grid()
    assert fr[0] == 0.5 and fr[-1] == 10.0 and len(fr) == 191
    b = default_b_grid()
    assert b[0] == pytest.approx(1e-4) and b[-1] == pytest.approx(2e-2)


def test_exhaustive_finds_drive_frequency():
    res = exhaustive_search(drive(2.0), np.arange(1.0, 4.01, 0.5), default_b_grid()[::3])
    assert res.best.f_r == pytest.approx(2.0)
    assert res.surface.shape == (7 * 10, 3)
    assert res.avg_power == res.surface[:, 2].max()


def test_matched_uses_dominant_frequency():
    res = frequency_matched_search(drive(2.5), default_b_grid()[::5])
    assert res.best.f_r == pytest.approx(2.5)
    assert len(res.surface) == 6


def test_matched_on_motionless_trace():
    with pytest.raises(NoDominantFrequencyError):
        frequency_matched_search(ScalarSeries(100.0, np.zeros(1000)))


def test_select_tie_breaking():
    surface = np.array([[3.0, 0.2, 1.0], [2.0, 0.2, 1.0], [2.0, 0.1, 1.0], [1.0, 0.1, 0.5]])
    assert _select(surface) == 2


def test_auto_method_by_length():
    short = tune(drive(2.0, duration=10.0), fr_grid=[2.0, 3.0], b_grid=[1e-3])
    assert len(short.surface) == 2
    long = tune(drive(2.0, duration=700.0), b_grid=[1e-3, 2e-3])
    assert len(long.surface) == 2 and long.best.f_r == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        tune(drive(2.0), method="random")


def test_parallel_search_matches_serial():
    kw = dict(fr_grid=[1.5, 2.0, 2.5], b_grid=[1e-3, 5e-3])
    a = exhaustive_search(drive(2.0, duration=5.0), **kw)
    b = exhaustive_search(drive(2.0, duration=5.0), workers=2, **kw)
    np.testing.assert_array_equal(a.surface, b.surface)


def test_surface_csv():
    res = exhaustive_search(drive(2.0, duration=5.0), [2.0], [1e-3])
    lines = res.surface_csv().splitlines()
    assert lines[0] == "f_r,b,avg_power_uW" and len(lines) == 2


def test_empty_grid_rejected():
    with pytest.raises(ConfigurationError):
        exhaustive_search(drive(2.0), [], [1e-3])
