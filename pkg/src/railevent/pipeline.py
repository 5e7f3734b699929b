"""Event analysis glue: chained trips to clusters, a recovered schedule,
observed left-behind proportions and simulation inputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .boardsim import TrainRun
from .ingest import NetworkModel, Trip
from .traincluster import (SCHEDULE_SLACK, AdjustedTrip, AdjustmentReport, ObservedRow, RecoveredSchedule,
                           TrainCluster, adjust_trips, assign_by_departure, cluster_riders,
                           observed_left_behind, recover_schedule)


@dataclass
class EventAnalysis:
    event_station: str
    stations: list[str]
    riders: list[AdjustedTrip]            # every rider boarding at a modelled station in the direction
    clustered: list[AdjustedTrip]         # the subset used for clustering
    clusters: list[TrainCluster]
    schedule: RecoveredSchedule
    assignment: dict[int, int]            # position in ``riders`` -> train index
    report: AdjustmentReport = field(repr=False, default=None)

    def arrivals(self) -> dict[str, np.ndarray]:
        """Entry times per boarding station."""
        return {s: np.sort(np.array([t.entry_time for t in self.riders if t.origin == s], dtype=np.int64))
                for s in self.stations}

    def adjusted_arrivals(self) -> np.ndarray:
        return np.sort(np.array([t.adjusted_arrival for t in self.riders], dtype=np.int64))

    def trains(self, capacity: int) -> list[TrainRun]:
        return [TrainRun(tr.train_index, {s: tr.departures[s] for s in self.stations if s in tr.departures},
                         capacity) for tr in self.schedule.trains]

    def observed_rows(self, station: str | None = None) -> list[ObservedRow]:
        return observed_left_behind(self.riders, self.clusters, self.schedule, station or self.event_station,
                                    self.assignment)

    def observed(self, station: str | None = None, denominator: str = "new") -> np.ndarray:
        rows = self.observed_rows(station)
        if denominator == "new":
            return np.array([r.proportion_of_new for r in rows])
        if denominator == "total":
            return np.array([r.proportion_of_total for r in rows])
        raise ValueError(f"unknown denominator {denominator!r}")


def analyze_event(trips: Sequence[Trip], net: NetworkModel, event_station: str, boarding_stations: Iterable[str],
                  *, cluster_destinations: Iterable[str] | None = None, direction: str = "EAST",
                  window: tuple[int, int] | None = None, min_cluster_size: int = 50,
                  min_samples: int | None = None, refine: Iterable[int] = (),
                  tolerance: int = SCHEDULE_SLACK) -> EventAnalysis:
    """Cluster the selected riders into trains and assign every other rider by departure."""
    stations = list(boarding_stations)
    if event_station not in stations:
        stations.append(event_station)
    rep = adjust_trips(trips, net, event_station, origins=stations, direction=direction, window=window)
    riders = rep.kept
    if cluster_destinations is None:
        clustered = list(riders)
    else:
        keep = set(cluster_destinations)
        clustered = [t for t in riders if t.destination in keep]
    clusters = cluster_riders(clustered, min_cluster_size, min_samples, refine)
    schedule = recover_schedule(clusters, clustered, net, stations, event_station)
    assignment = assign_by_departure(riders, clusters, clustered, tolerance)
    return EventAnalysis(event_station, schedule.stations, riders, clustered, clusters, schedule, assignment, rep)
