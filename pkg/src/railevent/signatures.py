"""Station signatures, event ridership above the baseline band, throughput curves."""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

from .ingest import TapEvent, UseType
from .timeutil import DAY, date_seconds, from_seconds

BIN_WIDTH = 900
DAY_START_HOUR = 3
UPPER_BOUND_PAD = 2

# average game length after the scheduled start
GAME_LENGTH = {"soccer": 110 * 60, "football": 190 * 60}


class DayType(enum.Enum):
    WEEKDAY = "WEEKDAY"
    WEEKEND = "WEEKEND"


class EmptyBaseline(ValueError):
    pass


class NoExceedance(ValueError):
    pass


class EmptyGameList(ValueError):
    pass


def n_bins(bin_width: int = BIN_WIDTH) -> int:
    if DAY % bin_width:
        raise ValueError("bin width must divide 86400")
    return DAY // bin_width


def assign_bin(timestamp: int, bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR
               ) -> tuple[date, int]:
    """Service day and bin index of a timestamp; the service day starts at ``day_start_hour``."""
    shifted = int(timestamp) - day_start_hour * 3600
    day = shifted // DAY
    return date(1970, 1, 1) + timedelta(days=day), (shifted - day * DAY) // bin_width


def service_day_start(day: date, day_start_hour: int = DAY_START_HOUR) -> int:
    return date_seconds(day) + day_start_hour * 3600


def day_type_of(day: date) -> DayType:
    return DayType.WEEKEND if day.weekday() >= 5 else DayType.WEEKDAY


def daily_counts(taps: Iterable[TapEvent], station: str, direction: UseType,
                 bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR) -> dict[date, np.ndarray]:
    """Per service day, tap counts in each bin for one station and direction."""
    nb = n_bins(bin_width)
    out: dict[date, np.ndarray] = defaultdict(lambda: np.zeros(nb, dtype=np.int64))
    for t in taps:
        if t.station_id == station and t.use_type is direction:
            d, b = assign_bin(t.timestamp, bin_width, day_start_hour)
            out[d][b] += 1
    return dict(out)


@dataclass
class StationSignature:
    station_id: str
    day_type: DayType
    direction: UseType
    mean: np.ndarray
    p_low: np.ndarray
    p_high: np.ndarray
    n_days: int
    bin_width: int = BIN_WIDTH
    day_start_hour: int = DAY_START_HOUR
    band: tuple[float, float] = (10.0, 90.0)

    @property
    def p10(self) -> np.ndarray:
        return self.p_low

    @property
    def p90(self) -> np.ndarray:
        return self.p_high

    def rows(self) -> list[dict]:
        return [
            {"bin": k, "bin_start": _bin_label(k, self.bin_width, self.day_start_hour),
             "mean": float(self.mean[k]), "p_low": float(self.p_low[k]), "p_high": float(self.p_high[k]),
             "n_days": self.n_days}
            for k in range(len(self.mean))
        ]


def _bin_label(k: int, bin_width: int, day_start_hour: int) -> str:
    secs = (day_start_hour * 3600 + k * bin_width) % DAY
    return f"{secs // 3600:02d}:{secs % 3600 // 60:02d}"


def build_signature(taps: Iterable[TapEvent], station: str, direction: UseType, day_type: DayType,
                    baseline_days: Iterable[date], exclude: Iterable[date] = (), *,
                    bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR,
                    band: tuple[float, float] = (10.0, 90.0), min_days: int = 8) -> StationSignature:
    """Mean and percentile band over the baseline days of the given day type.

    A listed baseline day with no taps contributes a zero row. Percentiles use
    linear interpolation between order statistics.
    """
    skip = set(exclude)
    days = sorted({d for d in baseline_days if d not in skip and day_type_of(d) is day_type})
    if not days:
        raise EmptyBaseline(f"no {day_type.value.lower()} baseline days for {station}")
    if len(days) < min_days:
        raise EmptyBaseline(f"{len(days)} baseline days for {station}, at least {min_days} required")
    counts = daily_counts(taps, station, direction, bin_width, day_start_hour)
    nb = n_bins(bin_width)
    matrix = np.vstack([counts.get(d, np.zeros(nb, dtype=np.int64)) for d in days])
    return signature_from_counts(matrix, station, day_type, direction, bin_width=bin_width,
                                 day_start_hour=day_start_hour, band=band)


def signature_from_counts(matrix, station: str, day_type: DayType, direction: UseType, *,
                          bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR,
                          band: tuple[float, float] = (10.0, 90.0)) -> StationSignature:
    """Signature from a (days, bins) count matrix."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[0] == 0:
        raise EmptyBaseline(f"no baseline days for {station}")
    lo, hi = np.percentile(m, band, axis=0, method="linear")
    return StationSignature(station, day_type, direction, m.mean(axis=0), lo, hi, m.shape[0],
                            bin_width, day_start_hour, band)


@dataclass
class EventRidershipEstimate:
    station_id: str
    event_ref: str | None
    t_start: int | None
    t_end: int | None
    r_a: np.ndarray = field(default_factory=lambda: np.zeros(0))
    total: float = 0.0
    upper_bound: float = 0.0

    @property
    def exceeded(self) -> bool:
        return self.t_start is not None


def estimate_event_ridership(signature: StationSignature, event_day_counts: Sequence[float],
                             event_ref: str | None = None, window: tuple[int, int] | None = None,
                             strict: bool = False, pad: int = UPPER_BOUND_PAD) -> EventRidershipEstimate:
    """Riders above the baseline in bins where the event day beats the upper band.

    ``window`` (inclusive bin range) restricts where exceedances are looked for.
    With no exceedance the returned estimate is empty (total 0) unless
    ``strict``, which raises :class:`NoExceedance`.
    """
    r_e = np.asarray(event_day_counts, dtype=float)
    if r_e.shape != signature.mean.shape:
        raise ValueError(f"expected {signature.mean.shape[0]} bins, got {r_e.shape}")
    above = r_e > signature.p_high
    if window is not None:
        mask = np.zeros_like(above)
        mask[max(window[0], 0):min(window[1], len(r_e) - 1) + 1] = True
        above &= mask
    idx = np.flatnonzero(above)
    if idx.size == 0:
        if strict:
            raise NoExceedance(f"no bin above the upper band at {signature.station_id}")
        return EventRidershipEstimate(signature.station_id, event_ref, None, None)
    t0, t1 = int(idx[0]), int(idx[-1])
    excess = np.where(above, np.maximum(r_e - signature.mean, 0.0), 0.0)
    r_a = excess[t0:t1 + 1]
    lo, hi = max(t0 - pad, 0), min(t1 + pad, len(r_e) - 1)
    seg = r_e[lo:hi + 1]
    upper = float(seg[seg > signature.mean[lo:hi + 1]].sum())
    return EventRidershipEstimate(signature.station_id, event_ref, t0, t1, r_a, float(r_a.sum()), upper)


def write_estimate_csv(est: EventRidershipEstimate, sig: StationSignature, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "bin_start", "r_a"])
        if est.exceeded:
            for k, v in zip(range(est.t_start, est.t_end + 1), est.r_a):
                w.writerow([k, _bin_label(k, sig.bin_width, sig.day_start_hour), f"{v:.6g}"])


def write_signature_csv(sig: StationSignature, dest) -> None:
    rows = sig.rows()
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def write_series_csv(xs: Iterable, ys: Iterable, dest, header=("x", "value")) -> None:
    """Two-column plot-ready series."""
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, y in zip(xs, ys):
            w.writerow([x, f"{y:.6g}" if isinstance(y, float) else y])


# ---------------------------------------------------------------------------
# throughput


@dataclass
class GameArrivals:
    """Station arrival times for one game and its adjusted end time."""

    name: str
    times: np.ndarray
    end_time: int
    offset_minutes: float = 0.0

    @property
    def adjusted_end(self) -> int:
        return int(self.end_time + round(self.offset_minutes * 60))


def scheduled_end(start: int, category: str) -> int:
    key = category.lower()
    for sport, length in GAME_LENGTH.items():
        if sport in key:
            return start + length
    raise KeyError(f"no average game length for {category!r}")


@dataclass
class ThroughputCurve:
    counts: dict[str, np.ndarray]
    mean: np.ndarray
    percent: np.ndarray
    bin_width: int = 300
    before: int = 40 * 60
    after: int = 80 * 60

    def bin_offsets(self) -> np.ndarray:
        """Left edge of each bin relative to the adjusted end, seconds."""
        return -self.before + self.bin_width * np.arange(len(self.mean))


def throughput_curve(games: Sequence[GameArrivals], bin_width: int = 300, before: int = 40 * 60,
                     after: int = 80 * 60) -> ThroughputCurve:
    if not games:
        raise EmptyGameList("at least one game is required")
    if (before + after) % bin_width:
        raise ValueError("window must be a whole number of bins")
    nb = (before + after) // bin_width
    counts = {}
    for g in games:
        rel = np.asarray(g.times, dtype=np.int64) - (g.adjusted_end - before)
        rel = rel[(rel >= 0) & (rel < before + after)]
        counts[g.name] = np.bincount(rel // bin_width, minlength=nb).astype(float)
    mean = np.mean(list(counts.values()), axis=0)
    total = mean.sum()
    if total <= 0:
        raise ValueError("no arrivals inside the throughput window")
    return ThroughputCurve(counts, mean, mean / total, bin_width, before, after)


def service_window_bins(start: int, lo_minutes: float, hi_minutes: float, day: date,
                        bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR) -> tuple[int, int]:
    """Inclusive bin range covering [start + lo, start + hi) on ``day``."""
    base = service_day_start(day, day_start_hour)
    a = int((start + lo_minutes * 60 - base) // bin_width)
    b = int((start + hi_minutes * 60 - 1 - base) // bin_width)
    nb = n_bins(bin_width)
    return max(a, 0), min(b, nb - 1)


def event_day_counts(taps: Iterable[TapEvent], station: str, direction: UseType, day: date,
                     bin_width: int = BIN_WIDTH, day_start_hour: int = DAY_START_HOUR) -> np.ndarray:
    counts = daily_counts(taps, station, direction, bin_width, day_start_hour)
    return counts.get(day, np.zeros(n_bins(bin_width), dtype=np.int64))


def service_day_of(ts: int, day_start_hour: int = DAY_START_HOUR) -> date:
    return from_seconds(ts - day_start_hour * 3600).date()
