from __future__ import annotations

from datetime import date

import numpy as np
import pytest

from railevent.ingest import TapEvent, UseType
from railevent.signatures import (DayType, EmptyBaseline, EmptyGameList, GameArrivals, NoExceedance,
                                  assign_bin, build_signature, estimate_event_ridership, signature_from_counts,
                                  throughput_curve)
from railevent.timeutil import clock

DAY = date(2018, 9, 22)


@pytest.mark.parametrize("ts,expected", [
    (clock(DAY, 3), (DAY, 0)),
    (clock(date(2018, 9, 23), 2, 59, 59), (DAY, 95)),
    (clock(DAY, 21, 7, 30), (DAY, 72)),
])
def test_assign_bin_boundaries(ts, expected):
    assert assign_bin(ts) == expected


def sig(matrix):
    return signature_from_counts(matrix, "S", DayType.WEEKDAY, UseType.ENTRY)


def test_single_day_signature():
    c = np.arange(96)
    s = sig([c])
    assert np.array_equal(s.mean, c) and np.array_equal(s.p10, c) and np.array_equal(s.p90, c)


def test_linear_interpolation_percentiles():
    s = sig(np.repeat(np.arange(0, 100, 10)[:, None], 96, axis=1))
    assert s.p10[0] == pytest.approx(9.0)
    assert s.p90[0] == pytest.approx(81.0)


def test_zero_days():
    s = sig(np.zeros((5, 96)))
    assert not s.mean.any() and not s.p10.any() and not s.p90.any()


def test_build_signature_from_taps():
    days = [date(2018, 9, d) for d in range(3, 15) if date(2018, 9, d).weekday() < 5]
    taps = [TapEvent(f"{d}-{k}", clock(d, 8) + k, UseType.ENTRY, "S") for d in days for k in range(d.day)]
    s = build_signature(taps, "S", UseType.ENTRY, DayType.WEEKDAY, days, min_days=8)
    b = assign_bin(clock(days[0], 8))[1]
    assert s.n_days == len(days)
    assert s.mean[b] == pytest.approx(np.mean([d.day for d in days]))
    assert s.mean.sum() == pytest.approx(s.mean[b])
    with pytest.raises(EmptyBaseline):
        build_signature(taps, "S", UseType.ENTRY, DayType.WEEKEND, days)
    with pytest.raises(EmptyBaseline):
        build_signature(taps, "S", UseType.ENTRY, DayType.WEEKDAY, days[:3], min_days=8)


def flat_signature(mean=10.0, high=15.0):
    s = sig(np.full((10, 96), mean))
    s.p_high = np.full(96, high)
    return s


def test_no_spike():
    s = flat_signature()
    est = estimate_event_ridership(s, s.mean)
    assert est.total == 0 and not est.exceeded
    with pytest.raises(NoExceedance):
        estimate_event_ridership(s, s.mean, strict=True)


def test_three_bin_spike():
    s = flat_signature()
    day = np.full(96, 10.0)
    day[70:73] = 200
    est = estimate_event_ridership(s, day)
    assert est.total == pytest.approx(570)
    assert (est.t_start, est.t_end) == (70, 72)
    assert est.total <= est.upper_bound


def test_window_limits_exceedances():
    s = flat_signature()
    day = np.full(96, 10.0)
    day[[20, 70]] = 100
    assert estimate_event_ridership(s, day, window=(60, 80)).total == pytest.approx(90)


def game(times, end=10_000):
    return GameArrivals("g", np.asarray(times), end)


def test_throughput_one_hot_and_uniform():
    c = throughput_curve([game([10_000 - 2400 + 5] * 30)])
    assert c.percent[0] == 1 and c.percent.sum() == 1 and len(c.percent) == 24
    uniform = np.arange(10_000 - 2400, 10_000 + 4800)
    assert np.allclose(throughput_curve([game(uniform)]).percent, 1 / 24)


def test_throughput_mean_of_identical_games():
    rng = np.random.default_rng(0)
    times = rng.integers(10_000 - 2400, 10_000 + 4800, 500)
    one = throughput_curve([game(times)])
    two = throughput_curve([game(times), game(times + 3600, 13_600)])
    assert np.allclose(one.percent, two.percent)
    assert abs(two.percent.sum() - 1) < 1e-9
    with pytest.raises(EmptyGameList):
        throughput_curve([])
