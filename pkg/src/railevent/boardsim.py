"""FIFO boarding of riders onto capacity-limited trains across ordered stations.

Per train, stations are visited in travel order and the train's remaining
room carries from one station to the next. At each station riders queue by
arrival time; riders left behind by a train stay at the head of the queue for
the next train that stops there. A train missing a station in its
``departures`` does not stop there. A rider arriving exactly at a departure
time can still board it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

UNSERVED = -1


class InvalidSchedule(ValueError):
    pass


class NegativeCapacity(ValueError):
    pass


@dataclass(frozen=True)
class TrainRun:
    index: int
    departures: Mapping[str, int]
    capacity: int


@dataclass
class SimInput:
    trains: list[TrainRun]
    stations: list[str]
    arrivals: dict[str, np.ndarray]

    def __post_init__(self):
        self.arrivals = {s: np.sort(np.asarray(self.arrivals.get(s, []), dtype=np.int64), kind="mergesort")
                         for s in self.stations}
        validate(self)


def validate(inp: SimInput) -> None:
    for tr in inp.trains:
        if tr.capacity < 0:
            raise NegativeCapacity(f"train {tr.index} has capacity {tr.capacity}")
        unknown = set(tr.departures) - set(inp.stations)
        if unknown:
            raise InvalidSchedule(f"train {tr.index} lists unknown stations {sorted(unknown)}")
    for s in inp.stations:
        times = [tr.departures[s] for tr in inp.trains if s in tr.departures]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidSchedule(f"departures at {s} are not strictly increasing")


@dataclass
class Demand:
    """New demand per (train, station) and the serving structure.

    ``new[i, k]`` is the number of riders arriving at station k after the
    previous stopping train and no later than train i; zero where train i
    does not stop.
    """

    stations: list[str]
    new: np.ndarray          # (n_trains, n_stations) int
    stops: np.ndarray        # (n_trains, n_stations) bool
    times: np.ndarray        # (n_trains, n_stations) int, -1 where no stop
    after_last: np.ndarray   # (n_stations,) riders arriving after the last stopping train


def demand_table(trains: Sequence[TrainRun], stations: Sequence[str],
                 arrivals: Mapping[str, np.ndarray]) -> Demand:
    n, m = len(trains), len(stations)
    new = np.zeros((n, m), dtype=np.int64)
    stops = np.zeros((n, m), dtype=bool)
    times = np.full((n, m), -1, dtype=np.int64)
    after = np.zeros(m, dtype=np.int64)
    for k, s in enumerate(stations):
        arr = arrivals.get(s, np.zeros(0, dtype=np.int64))
        rows = [i for i, tr in enumerate(trains) if s in tr.departures]
        t = np.array([trains[i].departures[s] for i in rows], dtype=np.int64)
        cum = np.searchsorted(arr, t, side="right")
        d = np.diff(np.concatenate([[0], cum]))
        new[rows, k] = d
        stops[rows, k] = True
        times[rows, k] = t
        after[k] = len(arr) - (cum[-1] if len(cum) else 0)
    return Demand(list(stations), new, stops, times, after)


def propagate(demand: Demand, capacities: np.ndarray):
    """Run the boarding recursion for one or many capacity vectors at once.

    ``capacities`` has shape (n_trains,) or (K, n_trains). Returns
    ``(total, left, room)`` each shaped (K, n_trains, n_stations) where
    ``room`` is the capacity left when the train reaches the station.
    """
    caps = np.atleast_2d(np.asarray(capacities, dtype=np.int64))
    K = caps.shape[0]
    n, m = demand.new.shape
    total = np.zeros((K, n, m), dtype=np.int64)
    left = np.zeros((K, n, m), dtype=np.int64)
    room_at = np.zeros((K, n, m), dtype=np.int64)
    carry = np.zeros((K, m), dtype=np.int64)
    for i in range(n):
        room = caps[:, i].copy()
        for k in range(m):
            if not demand.stops[i, k]:
                continue
            r = carry[:, k] + demand.new[i, k]
            l = np.maximum(r - room, 0)
            total[:, i, k] = r
            left[:, i, k] = l
            room_at[:, i, k] = room
            room = np.maximum(room - r, 0)
            carry[:, k] = l
    return total, left, room_at


@dataclass
class SimRow:
    train_index: int
    station: str
    departure: int
    new_demand: int
    total_demand: int
    boarded: int
    left_behind: int
    capacity_at_station: int
    remaining_capacity: int

    @property
    def proportion_left_behind(self) -> float:
        return self.left_behind / self.total_demand if self.total_demand else 0.0

    @property
    def proportion_of_new(self) -> float:
        return self.left_behind / self.new_demand if self.new_demand else 0.0


@dataclass
class RiderOutcomes:
    """Per-rider results at one station, in ascending arrival order."""

    arrival: np.ndarray
    train: np.ndarray          # train position in the schedule, or UNSERVED
    departure: np.ndarray      # boarded train's departure, -1 if unserved
    trains_waited: np.ndarray  # 1 = boarded the first train that stopped after arrival

    @property
    def served(self) -> np.ndarray:
        return self.train != UNSERVED

    @property
    def wait(self) -> np.ndarray:
        return (self.departure - self.arrival)[self.served]


@dataclass
class SimResult:
    rows: list[SimRow]
    riders: dict[str, RiderOutcomes]
    stations: list[str]
    n_trains: int
    unserved_left_behind: int = 0
    unserved_after_last: int = 0

    def row(self, train: int, station: str) -> SimRow | None:
        for r in self.rows:
            if r.train_index == train and r.station == station:
                return r
        return None

    def at_station(self, station: str) -> list[SimRow]:
        return [r for r in self.rows if r.station == station]

    def proportions(self, station: str, denominator: str = "total") -> np.ndarray:
        rows = self.at_station(station)
        if denominator == "total":
            return np.array([r.proportion_left_behind for r in rows])
        if denominator == "new":
            return np.array([r.proportion_of_new for r in rows])
        raise ValueError(f"unknown denominator {denominator!r}")

    @property
    def total_arrivals(self) -> int:
        return int(sum(len(o.arrival) for o in self.riders.values()))

    @property
    def total_boarded(self) -> int:
        return int(sum(r.boarded for r in self.rows))


def simulate_boarding(inp: SimInput) -> SimResult:
    trains, stations = inp.trains, inp.stations
    dem = demand_table(trains, stations, inp.arrivals)
    caps = np.array([tr.capacity for tr in trains], dtype=np.int64)
    total, left, room = (a[0] for a in propagate(dem, caps))

    rows = []
    for i, tr in enumerate(trains):
        for k, s in enumerate(stations):
            if not dem.stops[i, k]:
                continue
            r, l, c = int(total[i, k]), int(left[i, k]), int(room[i, k])
            rows.append(SimRow(tr.index, s, int(dem.times[i, k]), int(dem.new[i, k]), r, r - l, l, c,
                               max(c - r, 0)))

    riders = {}
    unserved_lb = 0
    for k, s in enumerate(stations):
        arr = inp.arrivals[s]
        serve_rows = np.flatnonzero(dem.stops[:, k])
        boarded = total[serve_rows, k] - left[serve_rows, k]
        cum = np.cumsum(boarded)
        rank = np.arange(len(arr))
        pos = np.searchsorted(cum, rank, side="right")
        served = pos < len(serve_rows)
        train = np.full(len(arr), UNSERVED, dtype=np.int64)
        dep = np.full(len(arr), -1, dtype=np.int64)
        train[served] = serve_rows[pos[served]]
        dep[served] = dem.times[serve_rows[pos[served]], k]
        first = np.searchsorted(dem.times[serve_rows, k], arr, side="left")
        waited = np.where(served, pos - first + 1, 0)
        riders[s] = RiderOutcomes(arr, train, dep, waited)
        if len(serve_rows):
            unserved_lb += int(left[serve_rows[-1], k])
    return SimResult(rows, riders, list(stations), len(trains), unserved_lb, int(dem.after_last.sum()))


def uniform_capacity(trains: Sequence[TrainRun], capacity: int) -> list[TrainRun]:
    return [TrainRun(t.index, t.departures, capacity) for t in trains]


def single_station_input(departures: Sequence[int], arrivals: Sequence[int], capacity: int | Sequence[int],
                         station: str = "S") -> SimInput:
    caps = [capacity] * len(departures) if np.isscalar(capacity) else list(capacity)
    trains = [TrainRun(i, {station: int(t)}, int(c)) for i, (t, c) in enumerate(zip(departures, caps))]
    return SimInput(trains, [station], {station: np.asarray(arrivals, dtype=np.int64)})


@dataclass
class WaitStats:
    median: float
    q3: float
    mean: float
    std: float
    n_served: int
    n_unserved: int
    series: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))
    max_trains_waited: int = 0


def wait_times(result: SimResult, stations: Sequence[str] | None = None, window: tuple[int, int] | None = None
               ) -> WaitStats:
    """Wait statistics (seconds) over served riders; quantiles by linear interpolation.

    ``window`` keeps riders whose arrival lies in [start, end).
    """
    waits, unserved, most = [], 0, 0
    for s in stations or result.stations:
        o = result.riders[s]
        keep = np.ones(len(o.arrival), dtype=bool)
        if window is not None:
            keep = (o.arrival >= window[0]) & (o.arrival < window[1])
        served = o.served & keep
        unserved += int(np.sum(~o.served & keep))
        waits.append((o.departure - o.arrival)[served])
        if served.any():
            most = max(most, int(o.trains_waited[served].max()))
    w = np.concatenate(waits) if waits else np.zeros(0)
    if w.size == 0:
        return WaitStats(0.0, 0.0, 0.0, 0.0, 0, unserved, w, 0)
    med, q3 = np.percentile(w, [50, 75], method="linear")
    std = float(np.std(w, ddof=1)) if w.size > 1 else 0.0
    return WaitStats(float(med), float(q3), float(w.mean()), std, int(w.size), unserved, w, most)


def left_behind_table(result: SimResult) -> list[dict]:
    if result.total_arrivals == 0:
        return []
    return [
        {"train": r.train_index, "station": r.station, "d": r.new_demand, "r": r.total_demand,
         "l": r.left_behind, "proportion": r.proportion_left_behind,
         "proportion_of_new": r.proportion_of_new}
        for r in result.rows
    ]


def write_left_behind_csv(result: SimResult, dest) -> None:
    from .timeutil import hms

    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train", "station", "departure", "d", "r", "boarded", "l", "capacity_at_station",
                    "proportion", "proportion_of_new"])
        for r in result.rows:
            w.writerow([r.train_index, r.station, hms(r.departure), r.new_demand, r.total_demand, r.boarded,
                        r.left_behind, r.capacity_at_station, f"{r.proportion_left_behind:.4f}",
                        f"{r.proportion_of_new:.4f}"])


def summary(result: SimResult) -> dict:
    ws = wait_times(result)
    return {
        "n_trains": result.n_trains,
        "total_arrivals": result.total_arrivals,
        "boarded": result.total_boarded,
        "unserved_left_behind": result.unserved_left_behind,
        "unserved_after_last": result.unserved_after_last,
        "wait_minutes": {"median": ws.median / 60, "q3": ws.q3 / 60, "mean": ws.mean / 60, "std": ws.std / 60},
        "max_trains_waited": ws.max_trains_waited,
    }


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)
