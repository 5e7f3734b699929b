"""Naive local-time helpers.

All timestamps in the package are integer seconds counted as if local civil
time were UTC. No timezone or DST arithmetic is performed.
"""

from __future__ import annotations

import calendar
from datetime import date, datetime, timedelta

DAY = 86400


def to_seconds(dt: datetime) -> int:
    return calendar.timegm(dt.timetuple())


def from_seconds(ts: int | float) -> datetime:
    return datetime(1970, 1, 1) + timedelta(seconds=int(ts))


def date_seconds(d: date) -> int:
    """Seconds at 00:00 of ``d``."""
    return calendar.timegm(d.timetuple())


def hms(ts: int | float) -> str:
    """Format the time-of-day part as HH:MM:SS."""
    return from_seconds(ts).strftime("%H:%M:%S")


def clock(d: date, hh: int, mm: int = 0, ss: int = 0) -> int:
    return date_seconds(d) + hh * 3600 + mm * 60 + ss
