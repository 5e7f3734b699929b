"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line."""

from __future__ import annotations

import time
from datetime import date

import numpy as np

from railevent import synthgen
from railevent.boardsim import SimInput, simulate_boarding, single_station_input, wait_times
from railevent.capacity import estimate_capacity, stability_analysis
from railevent.cli import main
from railevent.hdbscan1d import hdbscan_1d
from railevent.ingest import UseType, chain_trips
from railevent.pipeline import analyze_event
from railevent.predict import (FeatureEncoder, ModelSpec, fit_forest, fit_linear, loocv, permutation_importance,
                               targets)
from railevent.scheduleopt import Schedule, compare_schedules, forecast_arrivals, optimal_schedule, propose_schedule
from railevent.signatures import DayType, ThroughputCurve, estimate_event_ridership, signature_from_counts
from railevent.timeutil import date_seconds

from conftest import run_fixture
from oracles import canonical, mixture
from test_boardsim import check_against_oracle, random_instance

# left-behind proportion per recovered train (20:52 ... 22:00) at capacity 707
REFERENCE_707 = [0.00, 0.18, 0.19, 0.70, 0.29, 0.00, 0.00, 0.31, 0.17, 0.00, 0.00, 0.00, 0.00]
# median wait in minutes under the actual schedule and the optimal ones
REFERENCE_WAIT = {"actual": 3.50, 576: 2.50, 707: 3.03}
SCENARIO_DAY = date(2018, 6, 30)


def test_1_boarding_matches_event_loop_oracle(verdict):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    failures = 0
    for _ in range(1000):
        try:
            check_against_oracle(*random_instance(rng))
        except AssertionError:
            failures += 1
    dt = time.perf_counter() - t0
    verdict(1, failures == 0 and dt < 10, f"{1000 - failures}/1000 instances match the oracle in {dt:.1f} s")


def test_2_capacity_recovery(verdict, net):
    t0 = time.perf_counter()
    misses, least_congested = [], None
    for seed in range(50):
        spec = synthgen.capacity_scenario(seed, net)
        taps, truth = synthgen.gen_event_day(spec, SCENARIO_DAY, with_baseline=False)
        trips, _ = chain_trips(taps)
        ea = analyze_event(trips, net, "DOME", ["VC"], direction="EAST")
        congested = sum(r.left_behind > 0 for r in truth.sim.rows)
        least_congested = congested if least_congested is None else min(least_congested, congested)
        est = estimate_capacity(ea.trains(1), ea.stations, ea.arrivals(), ea.observed(), "DOME")
        if abs(est.best_capacity - truth.capacity) > 0.02 * truth.capacity:
            misses.append((seed, truth.capacity, est.best_capacity))
    dt = time.perf_counter() - t0
    ok = not misses and least_congested >= 8 and dt < 120
    verdict(2, ok, f"{50 - len(misses)}/50 within 2% (misses {misses}), "
                   f">= {least_congested} congested trains each, {dt:.0f} s")


def test_3_fixture(verdict):
    t0 = time.perf_counter()
    ea = run_fixture().analysis
    obs = ea.observed(denominator="total")
    est = estimate_capacity(ea.trains(1), ea.stations, ea.arrivals(), obs, "DOME", denominator="total")
    dt = time.perf_counter() - t0
    worst = float(np.max(np.abs(est.simulated_at_best - REFERENCE_707)))
    ok = (len(ea.clusters) == 13 and ea.schedule.skip_count("VC") == 3 and abs(est.best_capacity - 707) <= 2
          and worst <= 0.02 and dt < 60)
    verdict(3, ok, f"{len(ea.clusters)} clusters, {ea.schedule.skip_count('VC')} skip VC, "
                   f"capacity {est.best_capacity}, worst proportion error {worst:.3f}, {dt:.1f} s")


def test_4_stability(verdict, sept22):
    ea = sept22.analysis
    t0 = time.perf_counter()
    rep = stability_analysis(ea.trains(1), ea.stations, ea.arrivals(), ea.observed(denominator="total"), "DOME",
                             runs=100, seed=0, denominator="total")
    dt = time.perf_counter() - t0
    ok = 0.97 * 707 <= rep.q1 and rep.q3 <= 1.03 * 707 and dt < 300
    verdict(4, ok, f"q1 {rep.q1:g}, median {rep.median:g}, q3 {rep.q3:g}, mean {rep.mean:.1f}, {dt:.1f} s")


def test_5_optimal_schedule(verdict, sept22):
    ea, base = sept22.analysis, sept22.base
    lo, hi = base + synthgen.FIXTURE_PEAK[0], base + synthgen.FIXTURE_PEAK[1]
    adjusted = ea.adjusted_arrivals()
    peak = adjusted[(adjusted >= lo) & (adjusted < hi)]
    medians, counts, left = {}, {}, 0
    for cap in (576, 707):
        s = optimal_schedule(peak, cap)
        res = simulate_boarding(single_station_input(s.departures, peak, cap))
        counts[cap] = s.n_trains
        left += sum(r.left_behind for r in res.rows)
        medians[cap] = wait_times(res).median / 60
    # the recovered service as it ran, for every rider in the analysis window
    actual = simulate_boarding(SimInput(ea.trains(707), ea.stations, ea.arrivals()))
    medians["actual"] = wait_times(actual).median / 60
    close = all(abs(medians[k] - REFERENCE_WAIT[k]) <= 0.5 for k in REFERENCE_WAIT)
    ok = counts == {576: 12, 707: 10} and left == 0 and medians[576] < medians[707] < medians["actual"] and close
    verdict(5, ok, f"trains {counts[576]}@576 {counts[707]}@707, left behind {left}, median wait "
                   f"{medians[576]:.2f} < {medians[707]:.2f} < {medians['actual']:.2f} min")


def test_6_hdbscan_properties(verdict):
    broken = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        x = mixture(rng)
        mcs = int(rng.integers(5, 30))
        base = canonical(hdbscan_1d(x, mcs).labels, x)
        perm = rng.permutation(len(x))
        shifted = x + float(rng.integers(-10**6, 10**6))
        same = (np.array_equal(canonical(hdbscan_1d(x[perm], mcs).labels, x[perm]), base[perm])
                and np.array_equal(canonical(hdbscan_1d(shifted, mcs).labels, shifted), base))
        broken += not same
    wrong = 0
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(2, 10))
        times = np.cumsum(rng.integers(240, 900, n))
        sizes = rng.integers(50, 200, n)
        x = np.concatenate([t - rng.integers(0, 45, s) for t, s in zip(times, sizes)]).astype(float)
        truth = np.repeat(np.arange(n), sizes)
        labels = canonical(hdbscan_1d(x, 50).labels, x)
        wrong += not np.array_equal(labels, truth)
    verdict(6, broken == 0 and wrong == 0, f"invariance broken on {broken}/200 datasets, "
                                           f"inexact train recovery on {wrong}/50 instances")


def spike_trial(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(96)
    profile = 20 + 180 * np.exp(-0.5 * ((t - 20) / 6) ** 2) + 120 * np.exp(-0.5 * ((t - 58) / 8) ** 2)
    sig = signature_from_counts(rng.poisson(profile, (30, 96)), "DOME", DayType.WEEKDAY, UseType.ENTRY)
    width = int(rng.integers(3, 9))
    start = int(rng.integers(0, 96 - width))
    shape = np.exp(-0.5 * ((np.arange(width) - (width - 1) / 2) / (width / 3)) ** 2)
    injected = int(rng.integers(1500, 5000))
    day = rng.poisson(profile).astype(float)
    day[start:start + width] += rng.multinomial(injected, shape / shape.sum())
    # look for the spike from two bins before the event to two bins after
    est = estimate_event_ridership(sig, day, window=(start - 2, start + width + 1))
    return injected, est


def test_7_event_ridership(verdict):
    errors, over = [], 0
    for seed in range(100):
        injected, est = spike_trial(seed)
        errors.append(abs(est.total - injected) / injected)
        over += est.total > est.upper_bound
    worst = max(errors)
    verdict(7, worst <= 0.10 and over == 0, f"worst relative error {worst:.3f}, bound exceeded {over} times")


def test_8_prediction(verdict):
    t0 = time.perf_counter()
    wins = first = 0
    worst_slope = 0.0
    for seed in range(100):
        rows = synthgen.prediction_dataset(seed)
        enc = FeatureEncoder.fit(rows)
        X, y = enc.transform(rows), targets(rows, "post_event")
        worst_slope = max(worst_slope, abs(fit_linear(X, y, [0]).coefficients[0] - 0.174))
        lr = loocv(X, y, ModelSpec("lr"))
        combo = loocv(X, y, ModelSpec("lr+rf", B=25, seed=seed))
        wins += combo.mape < lr.mape
        forest = fit_forest(X, y, B=100, seed=seed)
        imp = permutation_importance(forest, X, y, seed)
        first += enc.names[int(np.argmax(imp))] == "attendance"
    dt = time.perf_counter() - t0
    ok = wins >= 90 and first >= 95 and worst_slope <= 0.01
    verdict(8, ok, f"LR+RF beats LR in {wins}/100, attendance ranked first in {first}/100, "
                   f"worst slope error {worst_slope:.4f}, {dt:.0f} s")


def run_cli_chain(root):
    spec = root / "fixture.spec"
    spec.write_text("scenario = sept22\n", encoding="utf-8")
    data, rec, cap = root / "data", root / "rec", root / "cap"
    steps = [
        ["synth", "--spec", str(spec), "--seed", "22", "--out", str(data)],
        ["chain", str(data / "taps.csv")],
        ["recover-schedule", "--trips", str(data / "trips.csv"), "--network", str(data / "network.json"),
         "--event-station", "DOME", "--stations", "VC", "--destinations", "EDGE,EL,DEC,AVON,KENS",
         "--direction", "EAST", "--date", "2018-09-22", "--window", "20:40-22:00", "--out", str(rec)],
        ["estimate-capacity", "--schedule", str(rec / "schedule.csv"), "--arrivals", str(rec / "arrivals.csv"),
         "--stations", "VC,DOME", "--observed", str(rec / "observed.csv"), "--out", str(cap)],
    ]
    codes = [main(argv) for argv in steps]
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix != ".spec")
    return codes, {p.relative_to(root): p.read_bytes() for p in files}


def test_9_cli_determinism(verdict, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    codes_a, a = run_cli_chain(tmp_path / "a")
    codes_b, b = run_cli_chain(tmp_path / "b")
    differ = sorted(str(k) for k in set(a) | set(b) if a.get(k) != b.get(k))
    ok = codes_a == codes_b == [0, 0, 0, 0] and not differ and len(a) >= 10
    verdict(9, ok, f"{len(a)} artifacts, {len(differ)} differ {differ}, exit codes {codes_a}")


def test_10_schedule_comparison(verdict, net):
    base = date_seconds(SCENARIO_DAY)
    profile = synthgen.game_profile()
    pct = profile / profile.sum()
    curve = ThroughputCurve({}, pct, pct)
    rows, ok = [], True
    for index in range(8):
        game = synthgen.game_scenario(0, index, 707, net)
        taps, _ = synthgen.gen_event_day(game.spec, SCENARIO_DAY, with_baseline=False)
        trips, _ = chain_trips(taps)
        ea = analyze_event(trips, net, "DOME", ["DOME"], direction="EAST", min_cluster_size=20)
        deps = [c.departure_estimate for c in ea.clusters]
        actual = Schedule(deps, 707, (deps[0], deps[-1]))
        fc = forecast_arrivals(curve, game.predicted_ridership, start=base + game.end_time - synthgen.GAME_BEFORE)
        rep = compare_schedules(actual, propose_schedule(fc, 707), ea.adjusted_arrivals(), 707)
        good = -1 <= rep.train_delta <= 3 and rep.proposed.avg_left_behind < rep.actual.avg_left_behind
        ok &= good
        rows.append(f"{rep.actual.n_trains}->{rep.proposed.n_trains} trains "
                    f"{100 * rep.actual.avg_left_behind:.1f}->{100 * rep.proposed.avg_left_behind:.1f}%LB")
    verdict(10, ok, "; ".join(rows))
