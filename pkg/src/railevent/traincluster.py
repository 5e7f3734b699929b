"""Departure/arrival inference at the event station, rider-to-train clustering,
and schedule recovery."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hdbscan1d import NOISE, hdbscan_1d
from .ingest import NetworkModel, Trip, TripFlag, travel_time
from .timeutil import hms

MAX_WAIT = 45 * 60
SCHEDULE_SLACK = 60


class NotOnEventPath(ValueError):
    pass


@dataclass(frozen=True)
class AdjustedTrip:
    trip_ref: int
    event_station: str
    adjusted_arrival: int
    adjusted_departure: int
    origin: str
    destination: str
    direction: str
    entry_time: int
    exit_time: int

    @property
    def wait(self) -> int:
        return self.adjusted_departure - self.adjusted_arrival


def line_direction(net: NetworkModel, line_id: str, forward: bool) -> str:
    labels = net.directions.get(line_id, ("EAST", "WEST"))
    return labels[0] if forward else labels[1]


def _path_line(net: NetworkModel, origin: str, event_station: str, dest: str) -> tuple[str, bool] | None:
    for line_id in net.common_lines(origin, dest):
        if event_station not in net.lines[line_id]:
            continue
        po, pe, pd = (net.position(line_id, s) for s in (origin, event_station, dest))
        if min(po, pd) <= pe <= max(po, pd) and po != pd:
            return line_id, pd > po
    return None


def adjust_trip(trip: Trip, net: NetworkModel, event_station: str, trip_ref: int = -1) -> AdjustedTrip:
    """Shift a trip's entry/exit times to the event station.

    departure = exit_time - tt(event, destination);
    arrival = entry_time + tt(origin, event).
    """
    hit = _path_line(net, trip.entry_station, event_station, trip.exit_station)
    if hit is None:
        raise NotOnEventPath(f"{trip.entry_station}->{trip.exit_station} does not pass {event_station}")
    line_id, forward = hit
    dep = trip.exit_time - travel_time(net, event_station, trip.exit_station)
    arr = trip.entry_time + travel_time(net, trip.entry_station, event_station)
    return AdjustedTrip(trip_ref, event_station, arr, dep, trip.entry_station, trip.exit_station,
                        line_direction(net, line_id, forward), trip.entry_time, trip.exit_time)


@dataclass
class AdjustmentReport:
    kept: list[AdjustedTrip]
    off_path: int = 0
    bad_wait: int = 0
    flagged: int = 0


def adjust_trips(trips: Sequence[Trip], net: NetworkModel, event_station: str, *,
                 origins: Iterable[str] | None = None, destinations: Iterable[str] | None = None,
                 direction: str | None = None, window: tuple[int, int] | None = None,
                 max_wait: int = MAX_WAIT) -> AdjustmentReport:
    """Adjust every eligible trip; trips with negative or over-long implied waits are dropped."""
    origins = set(origins) if origins is not None else None
    destinations = set(destinations) if destinations is not None else None
    rep = AdjustmentReport([])
    for ref, t in enumerate(trips):
        if t.flags & {TripFlag.FORCED_ENTRY, TripFlag.FORCED_EXIT, TripFlag.SELF_LOOP}:
            rep.flagged += 1
            continue
        if origins is not None and t.entry_station not in origins:
            continue
        if destinations is not None and t.exit_station not in destinations:
            continue
        if window is not None and not window[0] <= t.entry_time < window[1]:
            continue
        try:
            a = adjust_trip(t, net, event_station, ref)
        except (NotOnEventPath, ValueError):
            rep.off_path += 1
            continue
        if direction is not None and a.direction != direction:
            continue
        if not 0 <= a.wait <= max_wait:
            rep.bad_wait += 1
            continue
        rep.kept.append(a)
    return rep


@dataclass
class TrainCluster:
    train_index: int
    departure_estimate: int
    members: list[int]
    per_origin_counts: dict[str, int]


def _make_clusters(trips: Sequence[AdjustedTrip], groups: list[np.ndarray]) -> list[TrainCluster]:
    out = []
    for g in groups:
        members = [int(i) for i in g]
        dep = max(trips[i].adjusted_departure for i in members)
        counts = Counter(trips[i].origin for i in members)
        out.append(TrainCluster(-1, dep, members, dict(sorted(counts.items()))))
    out.sort(key=lambda c: (c.departure_estimate, min(c.members)))
    for k, c in enumerate(out):
        c.train_index = k
    return out


def first_pass(trips: Sequence[AdjustedTrip], min_cluster_size: int = 50,
               min_samples: int | None = None) -> list[np.ndarray]:
    x = np.array([t.adjusted_departure for t in trips], dtype=float)
    cl = hdbscan_1d(x, min_cluster_size, min_samples)
    return [cl.members(k) for k in range(cl.n_clusters)]


def cluster_riders(trips: Sequence[AdjustedTrip], min_cluster_size: int = 50,
                   min_samples: int | None = None, refine: Iterable[int] = ()) -> list[TrainCluster]:
    """Cluster riders into trains on their inferred departure times.

    ``refine`` lists first-pass cluster ids (ordered by departure time) that are
    clustered again on their own members and replaced by the sub-clusters.
    """
    if len({(t.event_station, t.direction) for t in trips}) > 1:
        raise ValueError("trips must share one event station and direction")
    groups = first_pass(trips, min_cluster_size, min_samples)
    groups.sort(key=lambda g: max(trips[i].adjusted_departure for i in g))
    refine = set(refine)
    bad = [r for r in refine if not 0 <= r < len(groups)]
    if bad:
        raise ValueError(f"refine ids {bad} out of range (first pass found {len(groups)} clusters)")
    out: list[np.ndarray] = []
    for cid, g in enumerate(groups):
        if cid not in refine:
            out.append(g)
            continue
        xs = np.array([trips[i].adjusted_departure for i in g], dtype=float)
        sub = hdbscan_1d(xs, min_cluster_size, min_samples)
        out.extend(g[sub.members(k)] for k in range(sub.n_clusters))
    return _make_clusters(trips, out)


def noise_count(trips: Sequence[AdjustedTrip], clusters: Sequence[TrainCluster]) -> int:
    return len(trips) - sum(len(c.members) for c in clusters)


@dataclass
class RecoveredTrain:
    train_index: int
    departures: dict[str, int]
    serves: set[str]
    skips: set[str] = field(default_factory=set)


@dataclass
class ScheduleWarning:
    train_index: int
    station: str
    message: str


@dataclass
class RecoveredSchedule:
    event_station: str
    stations: list[str]
    trains: list[RecoveredTrain]
    warnings: list[ScheduleWarning] = field(default_factory=list)

    def times_at(self, station: str) -> list[int | None]:
        return [t.departures.get(station) for t in self.trains]

    def skip_count(self, station: str) -> int:
        return sum(station in t.skips for t in self.trains)


def travel_order(net: NetworkModel, stations: Iterable[str], event_station: str, direction: str) -> list[str]:
    """Stations sorted along the direction of travel, ending at or past the event station."""
    stations = list(dict.fromkeys(stations))
    for line_id, seq in net.lines.items():
        if event_station in seq and all(s in seq for s in stations):
            forward = line_direction(net, line_id, True) == direction
            return sorted(stations, key=lambda s: seq.index(s) if forward else -seq.index(s))
    raise ValueError(f"stations {stations} do not share a line with {event_station}")


def recover_schedule(clusters: Sequence[TrainCluster], trips: Sequence[AdjustedTrip], net: NetworkModel,
                     candidate_stations: Iterable[str], event_station: str | None = None,
                     slack: int = SCHEDULE_SLACK) -> RecoveredSchedule:
    """Per-train departure times at each candidate station.

    A train's time at a boarding station is the latest entry time of its
    members from that station; at the event station it is the cluster's
    departure estimate. A train with no riders from a station whose next
    train does have some is marked as skipping it.
    """
    if event_station is None:
        event_station = trips[0].event_station if trips else None
    direction = trips[0].direction if trips else "EAST"
    order = travel_order(net, list(candidate_stations) + [event_station], event_station, direction)
    trains = []
    for c in clusters:
        deps, serves = {}, set()
        for s in order:
            times = [trips[i].entry_time for i in c.members if trips[i].origin == s]
            if s == event_station:
                deps[s] = c.departure_estimate
                serves.add(s)
            elif times:
                deps[s] = max(times)
                serves.add(s)
        trains.append(RecoveredTrain(c.train_index, deps, serves))
    for k, tr in enumerate(trains[:-1]):
        nxt = trains[k + 1]
        for s in order:
            if s not in tr.serves and s in nxt.serves:
                tr.skips.add(s)
    sched = RecoveredSchedule(event_station, order, trains)
    for s in order:
        last = None
        for tr in trains:
            t = tr.departures.get(s)
            if t is None:
                continue
            if last is not None and t <= last:
                sched.warnings.append(ScheduleWarning(tr.train_index, s, "departure not after previous train"))
            last = t
    for tr in trains:
        ev = tr.departures[event_station]
        for s in order:
            if s == event_station or s not in tr.departures:
                continue
            if order.index(s) < order.index(event_station) and \
                    ev < tr.departures[s] + travel_time(net, s, event_station) - slack:
                sched.warnings.append(ScheduleWarning(tr.train_index, s, "event-station departure too early"))
    return sched


def assignment_table(trips: Sequence[AdjustedTrip], clusters: Sequence[TrainCluster]) -> dict[int, int]:
    """trip position -> train index (noise riders absent)."""
    return {m: c.train_index for c in clusters for m in c.members}


def assign_by_departure(trips: Sequence[AdjustedTrip], clusters: Sequence[TrainCluster],
                        clustered: Sequence[AdjustedTrip] | None = None,
                        tolerance: int = SCHEDULE_SLACK) -> dict[int, int]:
    """Train index per position in ``trips``.

    Cluster members (matched on ``trip_ref`` when the clusters were built
    from a different list ``clustered``) keep their train. Any other trip joins
    the train whose departure estimate is nearest its own adjusted departure,
    if within ``tolerance`` seconds.
    """
    if clustered is None:
        table = assignment_table(trips, clusters)
    else:
        by_ref = {clustered[m].trip_ref: c.train_index for c in clusters for m in c.members}
        table = {i: by_ref[t.trip_ref] for i, t in enumerate(trips) if t.trip_ref in by_ref}
    if not clusters:
        return table
    deps = np.array([c.departure_estimate for c in clusters], dtype=np.int64)
    ids = [c.train_index for c in clusters]
    for i, t in enumerate(trips):
        if i in table:
            continue
        j = int(np.argmin(np.abs(deps - t.adjusted_departure)))
        if abs(int(deps[j]) - t.adjusted_departure) <= tolerance:
            table[i] = ids[j]
    return table


@dataclass
class ObservedRow:
    train_index: int
    departure: int
    new_demand: int
    total_demand: int
    left_behind: int

    @property
    def proportion_of_total(self) -> float:
        return self.left_behind / self.total_demand if self.total_demand else 0.0

    @property
    def proportion_of_new(self) -> float:
        return self.left_behind / self.new_demand if self.new_demand else 0.0


def observed_left_behind(trips: Sequence[AdjustedTrip], clusters: Sequence[TrainCluster],
                         schedule: RecoveredSchedule, station: str,
                         assignment: dict[int, int] | None = None) -> list[ObservedRow]:
    """Left-behind counts implied by the clustering at one boarding station.

    A rider who entered ``station`` by a train's departure but was assigned
    to a later train counts as left behind by it. ``assignment`` (trip
    position -> train index) defaults to the cluster membership.
    """
    train_of = assignment_table(trips, clusters) if assignment is None else assignment
    serving = [(k, tr.departures[station]) for k, tr in enumerate(schedule.trains) if station in tr.serves]
    if not serving:
        return []
    pos = {k: j for j, (k, _) in enumerate(serving)}
    times = np.array([t for _, t in serving])
    arr, assigned = [], []
    for i, t in enumerate(trips):
        if t.origin != station or i not in train_of or train_of[i] not in pos:
            continue
        arr.append(t.entry_time)
        assigned.append(pos[train_of[i]])
    arr = np.array(arr, dtype=np.int64)
    assigned = np.array(assigned, dtype=np.int64)
    slot = np.searchsorted(times, arr, side="left")  # first serving train at/after arrival
    rows = []
    for j, (k, dep) in enumerate(serving):
        new = int(np.sum(slot == j))
        waiting = (slot <= j) & (assigned >= j)
        left = int(np.sum((slot <= j) & (assigned > j)))
        rows.append(ObservedRow(k, dep, new, int(np.sum(waiting)), left))
    return rows


def write_assignments_csv(trips: Sequence[AdjustedTrip], clusters: Sequence[TrainCluster], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trip_ref", "train_index", "departure_estimate"])
        rows = sorted((trips[m].trip_ref, c.train_index, c.departure_estimate) for c in clusters for m in c.members)
        for ref, k, dep in rows:
            w.writerow([ref, k, hms(dep)])


def write_schedule_csv(schedule: RecoveredSchedule, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train_index", "station", "departure", "status"])
        for tr in schedule.trains:
            for s in schedule.stations:
                if s in tr.departures:
                    w.writerow([tr.train_index, s, hms(tr.departures[s]), "serves"])
                elif s in tr.skips:
                    w.writerow([tr.train_index, s, "", "skips"])
