"""Demand-matched schedules: the retrospective optimum from observed arrivals,
the prospective proposal from a throughput forecast, and side-by-side
comparison by boarding simulation at one anchor station."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

from .boardsim import SimInput, TrainRun, WaitStats, simulate_boarding, wait_times
from .signatures import ThroughputCurve
from .timeutil import hms

AFTER_WINDOW_HEADWAY = 600
ANCHOR = "ANCHOR"


class EmptyArrivals(ValueError):
    pass


@dataclass
class Schedule:
    departures: list[int]
    capacity: int
    window: tuple[int, int]

    def __post_init__(self):
        self.departures = [int(t) for t in self.departures]
        if any(b <= a for a, b in zip(self.departures, self.departures[1:])):
            raise ValueError("departures must be strictly increasing")
        lo, hi = self.window
        if self.departures and (self.departures[0] < lo or self.departures[-1] > hi):
            raise ValueError("departures fall outside the window")

    @property
    def n_trains(self) -> int:
        return len(self.departures)

    def headways(self) -> np.ndarray:
        return np.diff(np.asarray(self.departures, dtype=np.int64))

    def trains(self, station: str = ANCHOR) -> list[TrainRun]:
        return [TrainRun(i, {station: t}, self.capacity) for i, t in enumerate(self.departures)]


def _tie_safe_cut(arr: np.ndarray, prev: int, n: int) -> int:
    """Index of the last rider on the next train, never splitting a same-second group."""
    j = prev + n
    k = j
    while k > prev and arr[k] == arr[k + 1]:
        k -= 1
    if k > prev:
        return k
    # more than n riders share one second: the train leaves full at the end of that group
    while j + 1 < len(arr) and arr[j] == arr[j + 1]:
        j += 1
    return j


def optimal_schedule(sorted_arrivals: Sequence[int], capacity: int,
                     window: tuple[int, int] | None = None) -> Schedule:
    """Train i leaves when rider i*capacity arrives; a last train takes any remainder.

    Riders arriving in the same second are never split across a departure, so
    every rider boards the first train at or after their arrival. Without ties
    the train count is ceil(N / capacity).
    """
    arr = np.asarray(sorted_arrivals, dtype=np.int64)
    if arr.size == 0:
        raise EmptyArrivals("no arrivals to schedule")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if np.any(np.diff(arr) < 0):
        raise ValueError("arrivals must be sorted")
    deps, prev = [], -1
    while prev < len(arr) - 1:
        if prev + capacity >= len(arr) - 1:
            cut = len(arr) - 1
        else:
            cut = _tie_safe_cut(arr, prev, capacity)
        deps.append(int(arr[cut]))
        prev = cut
    return Schedule(deps, capacity, window or (int(arr[0]), int(arr[-1])))


@dataclass
class ArrivalForecast:
    bins: np.ndarray
    total: int
    bin_width: int = 300
    start: int = 0
    provenance: dict = field(default_factory=dict)

    @property
    def end(self) -> int:
        return self.start + self.bin_width * len(self.bins)


def _half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def forecast_arrivals(curve: ThroughputCurve, predicted_ridership: float, east_share: float = 0.92,
                      peak_share: float = 0.68, buffer: float = 1.10, start: int = 0) -> ArrivalForecast:
    """Riders per throughput bin: percent x prediction x shares x buffer, rounded half-up.

    ``start`` is the absolute time of the first bin's left edge.
    """
    scale = predicted_ridership * east_share * peak_share * buffer
    bins = np.array([_half_up(float(p) * scale) for p in curve.percent], dtype=np.int64)
    if np.any(bins < 0):
        raise ValueError("negative forecast")
    prov = {"predicted_ridership": predicted_ridership, "east_share": east_share,
            "peak_share": peak_share, "buffer": buffer}
    return ArrivalForecast(bins, int(bins.sum()), curve.bin_width, start, prov)


def materialize(forecast: ArrivalForecast) -> np.ndarray:
    """Spread each bin's riders evenly over the bin (integer seconds)."""
    out = []
    w = forecast.bin_width
    for k, c in enumerate(forecast.bins):
        c = int(c)
        if c:
            out.append(forecast.start + k * w + ((np.arange(c) + 0.5) * w / c).astype(np.int64))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def propose_schedule(forecast: ArrivalForecast, capacity: int) -> Schedule:
    """Train k leaves once forecast demand reaches k*capacity; a sweeper takes the rest at window end."""
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    arr = materialize(forecast)
    window = (forecast.start, forecast.end)
    if arr.size == 0:
        return Schedule([forecast.end], capacity, window)
    deps = []
    for k in range(1, len(arr) // capacity + 1):
        t = int(arr[k * capacity - 1])
        deps.append(t if not deps or t > deps[-1] else deps[-1] + 1)
    if len(arr) % capacity or not deps:
        deps.append(max(forecast.end, deps[-1] + 1) if deps else forecast.end)
    return Schedule(deps, capacity, (window[0], max(window[1], deps[-1])))


@dataclass
class ScheduleMetrics:
    n_trains: int
    wait: WaitStats
    avg_left_behind: float
    max_trains_waited: int
    extra_trains: int = 0

    def row(self) -> dict:
        return {"n_trains": self.n_trains, "wait_median_min": self.wait.median / 60,
                "wait_q3_min": self.wait.q3 / 60, "wait_mean_min": self.wait.mean / 60,
                "wait_std_min": self.wait.std / 60, "avg_pct_left_behind": 100 * self.avg_left_behind,
                "max_trains_waited": self.max_trains_waited}


@dataclass
class ComparisonReport:
    actual: ScheduleMetrics
    proposed: ScheduleMetrics
    capacity: int

    @property
    def train_delta(self) -> int:
        return self.proposed.n_trains - self.actual.n_trains


def _extended(schedule: Schedule, n_riders: int, capacity: int, headway: int) -> list[int]:
    deps = list(schedule.departures)
    # enough every-10-minute trains after the last scheduled one to clear any backlog
    extra = math.ceil(n_riders / max(capacity, 1)) + 1
    last = deps[-1] if deps else schedule.window[1]
    return deps + [last + headway * (k + 1) for k in range(extra)]


def evaluate_schedule(schedule: Schedule, arrivals: Sequence[int], capacity: int,
                      after_headway: int = AFTER_WINDOW_HEADWAY) -> ScheduleMetrics:
    """Simulate one schedule; riders not cleared by it wait for trains every ``after_headway`` s."""
    arr = np.sort(np.asarray(arrivals, dtype=np.int64))
    if arr.size == 0:
        raise EmptyArrivals("no realized arrivals")
    deps = _extended(schedule, len(arr), capacity, after_headway)
    if arr[-1] > deps[-1]:
        deps += list(range(deps[-1] + after_headway, int(arr[-1]) + after_headway + 1, after_headway))
    trains = [TrainRun(i, {ANCHOR: t}, capacity) for i, t in enumerate(deps)]
    res = simulate_boarding(SimInput(trains, [ANCHOR], {ANCHOR: arr}))
    scheduled = res.rows[:schedule.n_trains]
    lb = float(np.mean([r.proportion_left_behind for r in scheduled])) if scheduled else 0.0
    used = sum(1 for r in res.rows[schedule.n_trains:] if r.boarded)
    ws = wait_times(res)
    return ScheduleMetrics(schedule.n_trains, ws, lb, ws.max_trains_waited, used)


def compare_schedules(actual: Schedule, proposed: Schedule, realized_arrivals: Sequence[int], capacity: int,
                      after_headway: int = AFTER_WINDOW_HEADWAY) -> ComparisonReport:
    """Both schedules against the same realized arrivals and capacity."""
    return ComparisonReport(evaluate_schedule(actual, realized_arrivals, capacity, after_headway),
                            evaluate_schedule(proposed, realized_arrivals, capacity, after_headway), capacity)


def write_schedule_csv(schedule: Schedule, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train_index", "departure"])
        for i, t in enumerate(schedule.departures):
            w.writerow([i, hms(t)])


def write_comparison_csv(reports: dict[str, ComparisonReport], dest) -> None:
    """One row per game: # trains, Avg. WT, Std., Avg. % LB for both schedules."""
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game", "schedule", "n_trains", "avg_wt_min", "std_min", "avg_pct_lb", "median_wt_min",
                    "q3_wt_min", "max_trains_waited"])
        for name, rep in reports.items():
            for label, m in (("actual", rep.actual), ("proposed", rep.proposed)):
                r = m.row()
                w.writerow([name, label, r["n_trains"], f"{r['wait_mean_min']:.2f}", f"{r['wait_std_min']:.2f}",
                            f"{r['avg_pct_left_behind']:.1f}", f"{r['wait_median_min']:.2f}",
                            f"{r['wait_q3_min']:.2f}", r["max_trains_waited"]])
