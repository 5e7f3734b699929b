"""Fare-collection taps, trip chaining, events and the rail network model."""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, TextIO

from .timeutil import from_seconds, to_seconds

FORCED_EXIT_AFTER = 4 * 3600

TAP_COLUMNS = ("card_id", "timestamp", "use_type", "station_id")
EVENT_COLUMNS = ("begin", "category", "name", "location", "attendance")
EVENT_OPTIONAL = ("true_attendance", "wpdiff", "regularized_margin", "end_offset_minutes")
TRIP_COLUMNS = ("card_id", "entry_station", "entry_time", "exit_station", "exit_time", "flags")

_TAP_TIME_FORMATS = ("%Y/%m/%d %H:%M:%S", "%Y/%m/%d %H:%M")
_EVENT_TIME_FORMATS = (
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
)


class IngestError(ValueError):
    """Malformed input. ``line`` is the 1-based physical line number, if known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class MissingColumn(IngestError):
    pass


class BadTimestamp(IngestError):
    pass


class BadUseType(IngestError):
    pass


class BadAttendance(IngestError):
    pass


class BadNetwork(IngestError):
    pass


class NoCommonLine(ValueError):
    def __init__(self, origin: str, dest: str):
        self.origin = origin
        self.dest = dest
        super().__init__(f"no common line between {origin!r} and {dest!r}")


class UseType(enum.Enum):
    ENTRY = "ENTRY"
    EXIT = "EXIT"


_USE_TYPES = {
    "entry (tag on)": UseType.ENTRY,
    "exit (tag off)": UseType.EXIT,
    "entry": UseType.ENTRY,
    "exit": UseType.EXIT,
}
USE_TYPE_LABEL = {UseType.ENTRY: "Entry (Tag On)", UseType.EXIT: "Exit (Tag Off)"}


@dataclass(frozen=True)
class TapEvent:
    card_id: str
    timestamp: int
    use_type: UseType
    station_id: str

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")


class TripFlag(enum.Enum):
    FORCED_ENTRY = "FORCED_ENTRY"
    FORCED_EXIT = "FORCED_EXIT"
    SELF_LOOP = "SELF_LOOP"


@dataclass(frozen=True)
class Trip:
    card_id: str
    entry_station: str
    entry_time: int
    exit_station: str
    exit_time: int
    flags: frozenset = frozenset()

    def __post_init__(self):
        if self.exit_time < self.entry_time:
            raise ValueError("exit_time precedes entry_time")
        loop = self.entry_station == self.exit_station
        if loop != (TripFlag.SELF_LOOP in self.flags):
            flags = set(self.flags)
            flags.symmetric_difference_update({TripFlag.SELF_LOOP})
            object.__setattr__(self, "flags", frozenset(flags))


@dataclass(frozen=True)
class Anomaly:
    kind: str  # "forced_exit" | "double_tap"
    card_id: str
    timestamp: int
    station_id: str
    detail: str = ""


@dataclass
class EventRecord:
    begin: int
    category: str
    name: str
    location: str
    attendance: int
    true_attendance: int | None = None
    wpdiff: float | None = None
    regularized_margin: float | None = None
    end_offset_minutes: float | None = None

    def __post_init__(self):
        if self.attendance < 0:
            raise ValueError("attendance must be >= 0")
        if self.true_attendance is not None and self.true_attendance < 0:
            raise ValueError("true_attendance must be >= 0")

    @property
    def effective_attendance(self) -> int:
        return self.true_attendance if self.true_attendance is not None else self.attendance


# ---------------------------------------------------------------------------
# taps


def _open_text(source) -> tuple[TextIO, str, bool]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8"), str(source), True
    return source, getattr(source, "name", "<stream>"), False


def _parse_time(text: str, formats: Iterable[str]) -> int:
    text = text.strip()
    for fmt in formats:
        try:
            return to_seconds(datetime.strptime(text, fmt))
        except ValueError:
            continue
    raise ValueError(text)


def format_tap_time(ts: int) -> str:
    dt = from_seconds(ts)
    return f"{dt.year}/{dt.month}/{dt.day} {dt.hour}:{dt.minute:02d}:{dt.second:02d}"


def _header(reader, required, name) -> list[str]:
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MissingColumn("empty file, header row expected", line=1, source=name) from None
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumn(f"missing column(s): {', '.join(missing)}", line=1, source=name)
    return header


def parse_taps(source) -> list[TapEvent]:
    """Read a taps CSV (``card_id,timestamp,use_type,station_id``) in file order."""
    fh, name, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = _header(reader, TAP_COLUMNS, name)
        col = {c: header.index(c) for c in TAP_COLUMNS}
        taps = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise IngestError(f"expected {len(header)} fields, got {len(row)}", line, name)
            raw_time = row[col["timestamp"]]
            try:
                ts = _parse_time(raw_time, _TAP_TIME_FORMATS)
            except ValueError:
                raise BadTimestamp(f"bad timestamp {raw_time!r}", line, name) from None
            if ts < 0:
                raise BadTimestamp(f"timestamp before epoch {raw_time!r}", line, name)
            raw_use = row[col["use_type"]].strip()
            use = _USE_TYPES.get(raw_use.lower())
            if use is None:
                raise BadUseType(f"bad use_type {raw_use!r}", line, name)
            taps.append(TapEvent(row[col["card_id"]].strip(), ts, use, row[col["station_id"]].strip()))
        return taps
    finally:
        if owned:
            fh.close()


def write_taps(taps: Iterable[TapEvent], dest) -> None:
    fh, _, owned = (open(dest, "w", newline="", encoding="utf-8"), None, True) if isinstance(
        dest, (str, Path)
    ) else (dest, None, False)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TAP_COLUMNS)
        for t in taps:
            w.writerow([t.card_id, format_tap_time(t.timestamp), USE_TYPE_LABEL[t.use_type], t.station_id])
    finally:
        if owned:
            fh.close()


# ---------------------------------------------------------------------------
# trip chaining


def _forced_exit(tap: TapEvent) -> Trip:
    return Trip(tap.card_id, tap.station_id, tap.timestamp, tap.station_id, tap.timestamp,
                frozenset({TripFlag.FORCED_EXIT}))


def _forced_entry(tap: TapEvent) -> Trip:
    return Trip(tap.card_id, tap.station_id, tap.timestamp, tap.station_id, tap.timestamp,
                frozenset({TripFlag.FORCED_ENTRY}))


def chain_trips(taps: list[TapEvent], max_trip_seconds: int = FORCED_EXIT_AFTER
                ) -> tuple[list[Trip], list[Anomaly]]:
    """Match each entry with the next tap of the same card.

    An entry followed by another entry, by nothing, or by an exit more than
    ``max_trip_seconds`` later gets a forced exit at the entry station. An exit
    with no open entry becomes a forced-entry trip. Trips are returned grouped
    by card (cards in first-seen order), chronological within a card.
    """
    by_card: dict[str, list[TapEvent]] = defaultdict(list)
    for tap in taps:
        by_card[tap.card_id].append(tap)

    trips: list[Trip] = []
    anomalies: list[Anomaly] = []
    for card, card_taps in by_card.items():
        card_taps = sorted(card_taps, key=lambda t: t.timestamp)  # stable: file order on ties
        prev = None
        open_entry: TapEvent | None = None
        for tap in card_taps:
            if prev is not None and prev.timestamp == tap.timestamp and prev.use_type == tap.use_type \
                    and prev.station_id == tap.station_id:
                anomalies.append(Anomaly("double_tap", card, tap.timestamp, tap.station_id))
            prev = tap
            if open_entry is not None and tap.timestamp - open_entry.timestamp > max_trip_seconds:
                trips.append(_forced_exit(open_entry))
                anomalies.append(Anomaly("forced_exit", card, open_entry.timestamp, open_entry.station_id,
                                         "no exit within time limit"))
                open_entry = None
            if tap.use_type is UseType.ENTRY:
                if open_entry is not None:
                    trips.append(_forced_exit(open_entry))
                    anomalies.append(Anomaly("forced_exit", card, open_entry.timestamp,
                                             open_entry.station_id, "entry followed by entry"))
                open_entry = tap
            elif open_entry is not None:
                trips.append(Trip(card, open_entry.station_id, open_entry.timestamp,
                                  tap.station_id, tap.timestamp))
                open_entry = None
            else:
                trips.append(_forced_entry(tap))
        if open_entry is not None:
            trips.append(_forced_exit(open_entry))
            anomalies.append(Anomaly("forced_exit", card, open_entry.timestamp, open_entry.station_id,
                                     "entry without exit"))
    return trips, anomalies


def _flags_text(flags) -> str:
    return "|".join(sorted(f.value for f in flags))


def write_trips(trips: Iterable[Trip], dest) -> None:
    fh = open(dest, "w", newline="", encoding="utf-8") if isinstance(dest, (str, Path)) else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRIP_COLUMNS)
        for t in trips:
            w.writerow([t.card_id, t.entry_station, t.entry_time, t.exit_station, t.exit_time,
                        _flags_text(t.flags)])
    finally:
        if fh is not dest:
            fh.close()


def read_trips(source) -> list[Trip]:
    fh, name, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = _header(reader, TRIP_COLUMNS, name)
        col = {c: header.index(c) for c in TRIP_COLUMNS}
        out = []
        for row in reader:
            if not row:
                continue
            try:
                flags = frozenset(TripFlag(f) for f in row[col["flags"]].split("|") if f)
                out.append(Trip(row[col["card_id"]], row[col["entry_station"]], int(row[col["entry_time"]]),
                                row[col["exit_station"]], int(row[col["exit_time"]]), flags))
            except ValueError as exc:
                raise IngestError(str(exc), reader.line_num, name) from None
        return out
    finally:
        if owned:
            fh.close()


# ---------------------------------------------------------------------------
# events

_THOUSANDS_TAIL = re.compile(r"^\d{3}$")


def _parse_int(text: str) -> int:
    return int(text.strip().replace(",", ""))


def _opt_float(text: str | None) -> float | None:
    if text is None or not text.strip():
        return None
    return float(text)


def load_events(source) -> list[EventRecord]:
    """Read an events CSV. Attendance may carry thousands separators."""
    fh, name, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = _header(reader, EVENT_COLUMNS, name)
        col = {c: header.index(c) for c in header}
        att = col["attendance"]
        events = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            # unquoted "15,000" splits into extra fields
            while len(row) > len(header) and att + 1 < len(row) and _THOUSANDS_TAIL.match(row[att + 1].strip()):
                row = row[:att] + [row[att] + "," + row[att + 1]] + row[att + 2:]
            if len(row) < len(EVENT_COLUMNS):
                raise IngestError(f"expected at least {len(EVENT_COLUMNS)} fields", line, name)
            try:
                begin = _parse_time(row[col["begin"]], _EVENT_TIME_FORMATS)
            except ValueError:
                raise BadTimestamp(f"bad begin time {row[col['begin']]!r}", line, name) from None

            def get(key):
                i = col.get(key)
                return row[i] if i is not None and i < len(row) else None

            try:
                attendance = _parse_int(row[att])
                true_att = get("true_attendance")
                true_att = _parse_int(true_att) if true_att and true_att.strip() else None
            except ValueError:
                raise BadAttendance(f"bad attendance {row[att]!r}", line, name) from None
            if attendance < 0 or (true_att is not None and true_att < 0):
                raise BadAttendance("attendance must be non-negative", line, name)
            try:
                wpdiff = _opt_float(get("wpdiff"))
                margin = _opt_float(get("regularized_margin"))
                offset = _opt_float(get("end_offset_minutes"))
            except ValueError as exc:
                raise IngestError(f"bad numeric field: {exc}", line, name) from None
            if wpdiff is not None and not -1.0 <= wpdiff <= 1.0:
                raise IngestError(f"wpdiff {wpdiff} outside [-1, 1]", line, name)
            events.append(EventRecord(begin, row[col["category"]].strip(), row[col["name"]].strip(),
                                      row[col["location"]].strip(), attendance, true_att, wpdiff,
                                      margin, offset))
        return events
    finally:
        if owned:
            fh.close()


def write_events(events: Iterable[EventRecord], dest) -> None:
    fh = open(dest, "w", newline="", encoding="utf-8") if isinstance(dest, (str, Path)) else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS + EVENT_OPTIONAL)

        def fmt(v):
            return "" if v is None else v

        for e in events:
            w.writerow([from_seconds(e.begin).strftime("%m/%d/%Y %H:%M:%S"), e.category, e.name, e.location,
                        e.attendance, fmt(e.true_attendance), fmt(e.wpdiff), fmt(e.regularized_margin),
                        fmt(e.end_offset_minutes)])
    finally:
        if fh is not dest:
            fh.close()


# ---------------------------------------------------------------------------
# network


@dataclass(frozen=True)
class Station:
    station_id: str
    name: str
    lines: frozenset
    parking_spots: int | None = None


@dataclass
class NetworkModel:
    """Stations, ordered line sequences and per-segment running times (seconds).

    JSON schema::

        {"stations": [{"id": "DOME", "name": "Dome/GWCC", "parking_spots": 300}, ...],
         "lines": {"blue": {"stations": ["A", "B", ...], "segment_seconds": [120, ...],
                            "direction": ["EAST", "WEST"]}},
         "overrides": [{"from": "A", "to": "C", "seconds": 310}]}

    ``segment_seconds[k]`` is the time between ``stations[k]`` and
    ``stations[k+1]`` in either direction. ``direction`` names travel towards
    the end and towards the start of the list (default EAST/WEST). ``overrides`` replace the derived
    travel time for one ordered pair only.
    """

    stations: dict[str, Station]
    lines: dict[str, list[str]]
    segment_times: dict[tuple[str, str], int]
    overrides: dict[tuple[str, str], int] = field(default_factory=dict)
    directions: dict[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        for line_id, seq in self.lines.items():
            for s in seq:
                if s not in self.stations:
                    raise BadNetwork(f"line {line_id!r} references unknown station {s!r}")
            for a, b in zip(seq, seq[1:]):
                if self.segment_times.get((a, b), 0) <= 0:
                    raise BadNetwork(f"segment {a}->{b} on line {line_id!r} needs a positive time")
        # cumulative offsets per line for O(1) travel times
        self._offsets: dict[str, dict[str, int]] = {}
        for line_id, seq in self.lines.items():
            acc, pos = 0, {seq[0]: 0} if seq else {}
            for a, b in zip(seq, seq[1:]):
                acc += self.segment_times[(a, b)]
                pos[b] = acc
            self._offsets[line_id] = pos

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkModel":
        lines: dict[str, list[str]] = {}
        segs: dict[tuple[str, str], int] = {}
        member: dict[str, set] = defaultdict(set)
        directions = {}
        for line_id, spec in doc.get("lines", {}).items():
            directions[line_id] = tuple(spec.get("direction", ("EAST", "WEST")))
            seq = list(spec["stations"])
            secs = list(spec["segment_seconds"])
            if len(secs) != max(len(seq) - 1, 0):
                raise BadNetwork(f"line {line_id!r}: need {len(seq) - 1} segment times, got {len(secs)}")
            lines[line_id] = seq
            for (a, b), t in zip(zip(seq, seq[1:]), secs):
                segs[(a, b)] = int(t)
                segs[(b, a)] = int(t)
            for s in seq:
                member[s].add(line_id)
        stations = {}
        for st in doc.get("stations", []):
            parking = st.get("parking_spots")
            if parking is not None and int(parking) < 0:
                raise BadNetwork(f"station {st['id']!r}: negative parking_spots")
            stations[st["id"]] = Station(st["id"], st.get("name", st["id"]), frozenset(member[st["id"]]),
                                         None if parking is None else int(parking))
        overrides = {(o["from"], o["to"]): int(o["seconds"]) for o in doc.get("overrides", [])}
        return cls(stations, lines, segs, overrides, directions)

    def to_dict(self) -> dict:
        doc = {"stations": [], "lines": {}, "overrides": []}
        for st in self.stations.values():
            entry = {"id": st.station_id, "name": st.name}
            if st.parking_spots is not None:
                entry["parking_spots"] = st.parking_spots
            doc["stations"].append(entry)
        for line_id, seq in self.lines.items():
            doc["lines"][line_id] = {
                "stations": seq,
                "segment_seconds": [self.segment_times[(a, b)] for a, b in zip(seq, seq[1:])],
                "direction": list(self.directions.get(line_id, ("EAST", "WEST"))),
            }
        doc["overrides"] = [{"from": a, "to": b, "seconds": t} for (a, b), t in sorted(self.overrides.items())]
        return doc

    def common_lines(self, a: str, b: str) -> list[str]:
        return [lid for lid, pos in self._offsets.items() if a in pos and b in pos]

    def position(self, line_id: str, station: str) -> int:
        return self.lines[line_id].index(station)

    def offset(self, line_id: str, station: str) -> int:
        """Cumulative running time from the line's first station."""
        return self._offsets[line_id][station]


def load_network(source) -> NetworkModel:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    elif isinstance(source, dict):
        doc = source
    else:
        doc = json.load(source)
    if not isinstance(doc, dict) or "lines" not in doc or "stations" not in doc:
        raise BadNetwork("network document needs 'stations' and 'lines'")
    return NetworkModel.from_dict(doc)


def save_network(net: NetworkModel, dest) -> None:
    text = json.dumps(net.to_dict(), indent=2, sort_keys=False)
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text + "\n", encoding="utf-8")
    else:
        dest.write(text + "\n")


def travel_time(net: NetworkModel, origin: str, dest: str) -> int:
    """In-vehicle running time between two stations on a shared line."""
    if (origin, dest) in net.overrides:
        return net.overrides[(origin, dest)]
    if origin == dest:
        if origin not in net.stations:
            raise NoCommonLine(origin, dest)
        return 0
    lines = net.common_lines(origin, dest)
    if not lines:
        raise NoCommonLine(origin, dest)
    return min(abs(net.offset(l, dest) - net.offset(l, origin)) for l in lines)


def trips_to_csv_text(trips: Iterable[Trip]) -> str:
    buf = io.StringIO()
    write_trips(trips, buf)
    return buf.getvalue()
