"""Event-day feature rows and their numeric encoding."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Sequence

import numpy as np

from ..ingest import EventRecord
from ..signatures import StationSignature, estimate_event_ridership, service_day_of, service_window_bins

NONE = "NONE"
NO_LOCATION = "No Location"

# minutes after the start that count as the post-event window
POST_EVENT_WINDOW = {"basketball": (75, 195), "football": (30, 420), "soccer": (60, 300)}

NUMERIC = ("attendance", "wpdiff", "regularized_margin", "attendance2", "time_difference", "two_event", "week")
CATEGORICAL = ("category", "location", "category2", "location2", "month")


class NoSportingEvent(ValueError):
    def __init__(self, day: date):
        super().__init__(f"no sporting event on {day.isoformat()}")
        self.day = day


def sport_of(category: str) -> str | None:
    key = category.lower()
    for sport in POST_EVENT_WINDOW:
        if sport in key:
            return sport
    return None


@dataclass
class FeatureRow:
    date: date
    category: str
    location: str
    attendance: float
    wpdiff: float = 0.0
    regularized_margin: float = 0.0
    category2: str = NONE
    location2: str = NO_LOCATION
    attendance2: float = 0.0
    time_difference: float = 0.0
    two_event: bool = False
    week: bool = False
    month: int = 1
    target_post_event: float = 0.0
    target_whole_day: float = 0.0

    def __post_init__(self):
        if self.attendance < 0 or self.attendance2 < 0:
            raise ValueError("attendance must be >= 0")
        if not self.two_event and (self.attendance2 or self.time_difference or self.category2 != NONE):
            raise ValueError("second-event fields must be null on a single-event day")

    def target(self, name: str) -> float:
        return {"post_event": self.target_post_event, "whole_day": self.target_whole_day}[name]


def build_feature_rows(events_by_day: Mapping[date, Sequence[EventRecord]],
                       ridership_targets: Mapping[date, Mapping[str, float]]) -> list[FeatureRow]:
    """One row per day. The sporting event is Event 1 (the later start if two);
    the largest remaining event, if any, is Event 2.

    ``ridership_targets`` maps a day to ``{"post_event": ..., "whole_day": ...}``.
    """
    rows = []
    for day in sorted(events_by_day):
        events = sorted(events_by_day[day], key=lambda e: (e.begin, e.name))
        sports = [e for e in events if sport_of(e.category)]
        if not sports:
            raise NoSportingEvent(day)
        first = sports[-1]
        rest = [e for e in events if e is not first]
        second = max(rest, key=lambda e: (e.effective_attendance, -e.begin)) if rest else None
        tgt = ridership_targets.get(day, {})
        row = FeatureRow(
            date=day, category=first.category, location=first.location,
            attendance=float(first.effective_attendance),
            wpdiff=float(first.wpdiff or 0.0), regularized_margin=float(first.regularized_margin or 0.0),
            week=day.weekday() >= 5, month=day.month,
            target_post_event=float(tgt.get("post_event", 0.0)), target_whole_day=float(tgt.get("whole_day", 0.0)))
        if second is not None:
            row.category2 = second.category
            row.location2 = second.location or NO_LOCATION
            row.attendance2 = float(second.effective_attendance)
            row.time_difference = abs(first.begin - second.begin) / 60
            row.two_event = True
        rows.append(row)
    return rows


def group_by_day(events: Sequence[EventRecord], day_start_hour: int = 3) -> dict[date, list[EventRecord]]:
    out: dict[date, list[EventRecord]] = {}
    for e in events:
        out.setdefault(service_day_of(e.begin, day_start_hour), []).append(e)
    return out


@dataclass
class FeatureEncoder:
    """One-hot encoding of the categorical fields; levels come from the training rows."""

    numeric: tuple[str, ...] = NUMERIC
    categorical: tuple[str, ...] = CATEGORICAL
    levels: dict[str, list] = field(default_factory=dict)

    @classmethod
    def fit(cls, rows: Sequence[FeatureRow], numeric: Sequence[str] = NUMERIC,
            categorical: Sequence[str] = CATEGORICAL) -> "FeatureEncoder":
        levels = {c: sorted({getattr(r, c) for r in rows}) for c in categorical}
        return cls(tuple(numeric), tuple(categorical), levels)

    @property
    def names(self) -> list[str]:
        out = list(self.numeric)
        for c in self.categorical:
            out += [f"{c}={v}" for v in self.levels[c]]
        return out

    def transform(self, rows: Sequence[FeatureRow]) -> np.ndarray:
        cols = [np.array([float(getattr(r, c)) for r in rows]) for c in self.numeric]
        for c in self.categorical:
            vals = [getattr(r, c) for r in rows]
            for level in self.levels[c]:
                cols.append(np.array([1.0 if v == level else 0.0 for v in vals]))
        return np.column_stack(cols) if cols else np.zeros((len(rows), 0))

    def to_dict(self) -> dict:
        return {"numeric": list(self.numeric), "categorical": list(self.categorical),
                "levels": {k: list(v) for k, v in self.levels.items()}}

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureEncoder":
        return cls(tuple(doc["numeric"]), tuple(doc["categorical"]), {k: list(v) for k, v in doc["levels"].items()})


def targets(rows: Sequence[FeatureRow], name: str) -> np.ndarray:
    return np.array([r.target(name) for r in rows], dtype=float)


def ridership_targets(signature: StationSignature, event_day_counts: Sequence[float], start: int,
                      category: str, day: date) -> dict[str, float]:
    """Post-event riders inside the category's window and whole-day riders above the band."""
    sport = sport_of(category)
    if sport is None:
        raise ValueError(f"{category!r} has no post-event window")
    lo, hi = POST_EVENT_WINDOW[sport]
    window = service_window_bins(start, lo, hi, day, signature.bin_width, signature.day_start_hour)
    post = estimate_event_ridership(signature, event_day_counts, window=window)
    whole = estimate_event_ridership(signature, event_day_counts)
    return {"post_event": post.total, "whole_day": whole.total}


ROW_COLUMNS = ("date", "category", "location", "attendance", "wpdiff", "regularized_margin", "category2",
               "location2", "attendance2", "time_difference", "two_event", "week", "month",
               "target_post_event", "target_whole_day")


def write_rows_csv(rows: Sequence[FeatureRow], dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in rows:
            vals = []
            for c in ROW_COLUMNS:
                v = getattr(r, c)
                if isinstance(v, bool):
                    v = int(v)
                elif isinstance(v, date):
                    v = v.isoformat()
                elif isinstance(v, float):
                    v = repr(v)
                vals.append(v)
            w.writerow(vals)


def read_rows_csv(path) -> list[FeatureRow]:
    from ..ingest import IngestError, MissingColumn

    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ROW_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise MissingColumn(f"missing column(s) {', '.join(missing)}", 1, str(path))
        for k, row in enumerate(reader, start=2):
            try:
                out.append(FeatureRow(
                    date=date.fromisoformat(row["date"]), category=row["category"], location=row["location"],
                    attendance=float(row["attendance"]), wpdiff=float(row["wpdiff"]),
                    regularized_margin=float(row["regularized_margin"]), category2=row["category2"],
                    location2=row["location2"], attendance2=float(row["attendance2"]),
                    time_difference=float(row["time_difference"]), two_event=row["two_event"] in ("1", "True"),
                    week=row["week"] in ("1", "True"), month=int(row["month"]),
                    target_post_event=float(row["target_post_event"]),
                    target_whole_day=float(row["target_whole_day"])))
            except ValueError as exc:
                raise IngestError(str(exc), k, str(path)) from None
    return out
