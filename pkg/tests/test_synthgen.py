from __future__ import annotations

from datetime import date, timedelta

import numpy as np

from railevent import synthgen
from railevent.boardsim import UNSERVED, SimInput, simulate_boarding
from railevent.ingest import UseType, chain_trips
from railevent.synthgen import EventSpec, ScenarioSpec, gen_baseline_day, gen_event_day

DAY = date(2018, 3, 6)


def test_zero_rates_give_an_empty_day(net):
    spec = ScenarioSpec(1, net, {"DOME": np.zeros(96), "VC": np.zeros(96)})
    assert gen_baseline_day(spec, DAY) == []


def test_poisson_daily_mean(net):
    r = 0.5
    spec = ScenarioSpec(2, net, {"DOME": np.full(96, r)})
    counts = [sum(t.use_type is UseType.ENTRY for t in gen_baseline_day(spec, DAY + timedelta(days=k)))
              for k in range(50)]
    mean, expected = np.mean(counts), 96 * r
    assert abs(mean - expected) <= 3 * np.sqrt(expected / 50)


def test_baseline_is_deterministic_and_chains_cleanly(net):
    spec = ScenarioSpec(3, net, {"DOME": np.full(96, 2.0), "FP": np.full(96, 1.0)})
    a, b = gen_baseline_day(spec, DAY), gen_baseline_day(spec, DAY)
    assert a == b and a
    trips, anomalies = chain_trips(a)
    assert not anomalies and len(trips) == len(a) // 2


def burst_spec(net, n, capacity):
    ev = EventSpec("DOME", ["DOME"], [{"DOME": 75000}, {"DOME": 75600}], capacity,
                   np.array(["DOME"] * n), np.arange(74000, 74000 + n), np.array(["EDGE"] * n))
    return ScenarioSpec(4, net, {}, event=ev)


def test_burst_left_behind(net):
    taps, truth = gen_event_day(burst_spec(net, 900, 707), DAY, with_baseline=False)
    first = truth.sim.rows[0]
    assert first.left_behind == 900 - 707
    assert np.sum(truth.train == 0) == 707 and np.sum(truth.train == 1) == 193


def test_no_event_riders_is_the_baseline(net):
    spec = ScenarioSpec(5, net, {"DOME": np.full(96, 1.0)})
    taps, truth = gen_event_day(spec, DAY)
    assert truth is None and taps == gen_baseline_day(spec, DAY)


def test_fixture_truth_is_self_consistent(sept22):
    truth = sept22.truth
    res = simulate_boarding(SimInput(truth.train_runs(), truth.stations, truth.arrivals_by_station()))
    for s in truth.stations:
        idx = np.flatnonzero(truth.origins == s)
        order = idx[np.argsort(truth.arrivals[idx], kind="mergesort")]
        assert np.array_equal(truth.train[order], res.riders[s].train)
    served = truth.train != UNSERVED
    assert np.all(truth.departures[served] >= truth.arrivals[served])


def test_fixture_chains_without_anomalies(sept22):
    assert sept22.anomalies == []
    assert len(sept22.trips) == len(sept22.truth.card_ids)


def test_capacity_scenario_is_congested(net):
    for seed in range(5):
        spec = synthgen.capacity_scenario(seed, net)
        taps, truth = gen_event_day(spec, synthgen.FIXTURE_DAY, with_baseline=False)
        assert 400 <= truth.capacity <= 900
        assert sum(r.left_behind > 0 for r in truth.sim.rows) >= 8
