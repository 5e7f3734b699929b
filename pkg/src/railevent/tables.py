"""CSV artifacts passed between pipeline commands."""

from __future__ import annotations

import csv
from datetime import date, datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .boardsim import TrainRun
from .ingest import BadTimestamp, IngestError, MissingColumn
from .timeutil import date_seconds, from_seconds, hms, to_seconds
from .traincluster import ObservedRow

STAMP = "%Y-%m-%d %H:%M:%S"


def stamp(ts: int) -> str:
    return from_seconds(ts).strftime(STAMP)


def parse_stamp(text: str, source: str = "", line: int | None = None) -> int:
    try:
        return to_seconds(datetime.strptime(text.strip(), STAMP))
    except ValueError:
        raise BadTimestamp(f"bad timestamp {text!r}", line, source) from None


def _rows(path, required: Sequence[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumn(f"missing column(s) {', '.join(missing)}", 1, str(path))
        for k, row in enumerate(reader, start=2):
            yield k, row


def write_arrivals_csv(arrivals: Mapping[str, np.ndarray], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["station", "time"])
        for s, times in arrivals.items():
            for t in np.sort(np.asarray(times, dtype=np.int64)):
                w.writerow([s, stamp(int(t))])


def read_arrivals_csv(path) -> dict[str, np.ndarray]:
    out: dict[str, list[int]] = {}
    for k, row in _rows(path, ("station", "time")):
        out.setdefault(row["station"], []).append(parse_stamp(row["time"], str(path), k))
    return {s: np.sort(np.array(v, dtype=np.int64)) for s, v in out.items()}


def service_date(arrivals: Mapping[str, np.ndarray], day_start_hour: int = 3) -> date:
    first = min(int(v[0]) for v in arrivals.values() if len(v))
    return from_seconds(first - day_start_hour * 3600).date()


def parse_clock(text: str, day: date, day_start_hour: int = 3, source: str = "", line: int | None = None) -> int:
    """HH:MM[:SS] on the service day; times before the day start fall on the next calendar day."""
    try:
        parts = [int(p) for p in text.strip().split(":")]
        h, m, s = (parts + [0, 0])[:3]
        if not (0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60) or len(parts) not in (2, 3):
            raise ValueError
    except ValueError:
        raise BadTimestamp(f"bad clock time {text!r}", line, source) from None
    secs = h * 3600 + m * 60 + s
    if h < day_start_hour:
        secs += 86400
    return date_seconds(day) + secs


def read_schedule_csv(path, day: date, capacity: int, day_start_hour: int = 3) -> list[TrainRun]:
    """Either a recovered schedule (train_index, station, departure, status) or a
    single-station schedule (train_index, departure) whose station is ``ANCHOR``."""
    deps: dict[int, dict[str, int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    multi = "station" in header
    for k, row in _rows(path, ("train_index", "departure")):
        if multi and row.get("status", "serves") != "serves":
            continue
        station = row["station"] if multi else "ANCHOR"
        try:
            idx = int(row["train_index"])
        except ValueError:
            raise IngestError(f"bad train index {row['train_index']!r}", k, str(path)) from None
        deps.setdefault(idx, {})[station] = parse_clock(row["departure"], day, day_start_hour, str(path), k)
    return [TrainRun(i, deps[i], capacity) for i in sorted(deps)]


def stations_of(trains: Iterable[TrainRun], order: Sequence[str] | None = None) -> list[str]:
    seen = list(dict.fromkeys(s for t in trains for s in t.departures))
    if order:
        return [s for s in order if s in seen] + [s for s in seen if s not in order]
    return seen


def write_observed_csv(rows: Sequence[ObservedRow], station: str, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["train_index", "station", "departure", "d", "r", "l", "proportion_of_total",
                    "proportion_of_new"])
        for r in rows:
            w.writerow([r.train_index, station, hms(r.departure), r.new_demand, r.total_demand, r.left_behind,
                        f"{r.proportion_of_total:.6f}", f"{r.proportion_of_new:.6f}"])


def read_observed_csv(path, denominator: str = "new") -> tuple[str, np.ndarray]:
    col = {"new": "proportion_of_new", "total": "proportion_of_total"}[denominator]
    station, vals = None, []
    for k, row in _rows(path, ("station", col)):
        station = station or row["station"]
        try:
            vals.append(float(row[col]))
        except ValueError:
            raise IngestError(f"bad proportion {row[col]!r}", k, str(path)) from None
    if station is None:
        raise IngestError("no observed rows", None, str(path))
    return station, np.array(vals)


def write_times_csv(times: Iterable[int], dest, header: str = "time") -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([header])
        for t in times:
            w.writerow([stamp(int(t))])


def read_curve_csv(path) -> np.ndarray:
    """Throughput percentages from a (offset_min, percent) series."""
    vals = []
    for k, row in _rows(path, ("percent",)):
        try:
            vals.append(float(row["percent"]))
        except ValueError:
            raise IngestError(f"bad percent {row['percent']!r}", k, str(path)) from None
    return np.array(vals)
