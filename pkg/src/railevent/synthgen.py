"""Synthetic fare-collection data with a known answer key.

Event riders' exits come from running the boarding simulation against a
ground-truth schedule and capacity, so every downstream inference step has an
exact target. Every random draw comes from a stream derived from the scenario
seed plus a fixed tag, never from global state.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Sequence

import numpy as np

from .boardsim import UNSERVED, SimInput, SimResult, TrainRun, simulate_boarding
from .ingest import NetworkModel, TapEvent, UseType, travel_time
from .timeutil import date_seconds, hms

AFTER_HEADWAY = 600


def stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *tags])))


def _day_tag(day: date) -> int:
    return day.toordinal()


# ---------------------------------------------------------------------------
# network


def demo_network() -> NetworkModel:
    """East-west and north-south lines crossing at Five Points."""
    ew = ["HEH", "WL", "ASHBY", "VC", "DOME", "FP", "GSU", "KM", "INMAN", "EDGE", "EL", "DEC", "AVON", "KENS"]
    ew_secs = [150, 120, 120, 120, 90, 90, 90, 120, 120, 120, 150, 120, 120]
    ns = ["AIRPORT", "CP", "EP", "LAKE", "OC", "WE", "GARNETT", "FP", "PTC", "CC", "NAVE", "MID", "ARTS"]
    ns_secs = [180, 180, 150, 120, 150, 120, 90, 90, 90, 120, 90, 90]
    names = {
        "HEH": "H. E. Holmes", "WL": "West Lake", "ASHBY": "Ashby", "VC": "Vine City", "DOME": "Dome/GWCC",
        "FP": "Five Points", "GSU": "Georgia State", "KM": "King Memorial", "INMAN": "Inman Park",
        "EDGE": "Edgewood/Candler Park", "EL": "East Lake", "DEC": "Decatur", "AVON": "Avondale",
        "KENS": "Kensington", "AIRPORT": "Airport", "CP": "College Park", "EP": "East Point",
        "LAKE": "Lakewood", "OC": "Oakland City", "WE": "West End", "GARNETT": "Garnett",
        "PTC": "Peachtree Center", "CC": "Civic Center", "NAVE": "North Avenue", "MID": "Midtown",
        "ARTS": "Arts Center",
    }
    doc = {
        "stations": [{"id": s, "name": names[s]} for s in dict.fromkeys(ew + ns)],
        "lines": {
            "blue": {"stations": ew, "segment_seconds": ew_secs, "direction": ["EAST", "WEST"]},
            "red": {"stations": ns, "segment_seconds": ns_secs, "direction": ["NORTH", "SOUTH"]},
        },
    }
    return NetworkModel.from_dict(doc)


# ---------------------------------------------------------------------------
# scenario types


@dataclass
class EventSpec:
    """Ground truth for one event departure wave.

    ``trains`` hold departures per boarding station as seconds after midnight;
    a station missing from a train is skipped by it. Rider arrivals are also
    seconds after midnight.
    """

    event_station: str
    stations: list[str]
    trains: list[dict[str, int]]
    capacity: int
    origins: np.ndarray
    arrivals: np.ndarray
    destinations: np.ndarray
    exit_jitter: int = 0
    selected: np.ndarray | None = None

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        for s in self.stations:
            times = [t[s] for t in self.trains if s in t]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError(f"train times at {s} must be strictly increasing")
        self.origins = np.asarray(self.origins, dtype=object)
        self.arrivals = np.asarray(self.arrivals, dtype=np.int64)
        self.destinations = np.asarray(self.destinations, dtype=object)

    @property
    def n_riders(self) -> int:
        return len(self.arrivals)


@dataclass
class ScenarioSpec:
    seed: int
    network: NetworkModel
    baseline: dict[str, np.ndarray] = field(default_factory=dict)  # station -> mean entries per bin
    bin_width: int = 900
    day_start_hour: int = 3
    event: EventSpec | None = None
    name: str = "scenario"

    def __post_init__(self):
        for s, r in self.baseline.items():
            if np.any(np.asarray(r) < 0):
                raise ValueError(f"negative baseline rate at {s}")


@dataclass
class GroundTruth:
    """Answer key for one generated event day."""

    day: date
    event_station: str
    stations: list[str]
    capacity: int
    trains: list[dict[str, int]]           # absolute seconds
    card_ids: list[str]
    origins: np.ndarray
    destinations: np.ndarray
    arrivals: np.ndarray                   # absolute seconds
    train: np.ndarray                      # boarded train index, or UNSERVED
    departures: np.ndarray                 # departure of the boarded train at the origin
    exits: np.ndarray
    sim: SimResult = field(repr=False, default=None)
    selected: np.ndarray | None = None

    def arrivals_by_station(self) -> dict[str, np.ndarray]:
        return {s: np.sort(self.arrivals[self.origins == s]) for s in self.stations}

    def train_runs(self) -> list[TrainRun]:
        return [TrainRun(i, dict(t), self.capacity) for i, t in enumerate(self.trains)]


# ---------------------------------------------------------------------------
# baseline


def _reachable(net: NetworkModel, origin: str) -> list[str]:
    return sorted({s for seq in net.lines.values() if origin in seq for s in seq if s != origin})


def gen_baseline_day(spec: ScenarioSpec, day: date) -> list[TapEvent]:
    """Poisson entries per station and bin, each with a matching exit."""
    rng = stream(spec.seed, 1, _day_tag(day))
    start = date_seconds(day) + spec.day_start_hour * 3600
    taps: list[TapEvent] = []
    k = 0
    for station in sorted(spec.baseline):
        rates = np.asarray(spec.baseline[station], dtype=float)
        counts = rng.poisson(rates)
        dests = _reachable(spec.network, station)
        for b in np.flatnonzero(counts):
            n = int(counts[b])
            t_in = start + b * spec.bin_width + rng.integers(0, spec.bin_width, n)
            to = rng.integers(0, len(dests), n)
            wait = rng.integers(0, 301, n)
            for t, j, w in zip(t_in, to, wait):
                card = f"B{day:%Y%m%d}-{k:07d}"
                k += 1
                dest = dests[int(j)]
                taps.append(TapEvent(card, int(t), UseType.ENTRY, station))
                taps.append(TapEvent(card, int(t + w + travel_time(spec.network, station, dest)),
                                     UseType.EXIT, dest))
    return taps


# ---------------------------------------------------------------------------
# event day


def board_event(ev: EventSpec, base: int) -> tuple[SimResult, np.ndarray, np.ndarray]:
    """Simulate boarding; returns the result plus per-rider train and departure (rider order)."""
    trains = [TrainRun(i, {s: base + t for s, t in tr.items()}, ev.capacity) for i, tr in enumerate(ev.trains)]
    arrivals = {s: base + ev.arrivals[ev.origins == s] for s in ev.stations}
    res = simulate_boarding(SimInput(trains, list(ev.stations), arrivals))
    train = np.full(ev.n_riders, UNSERVED, dtype=np.int64)
    dep = np.full(ev.n_riders, -1, dtype=np.int64)
    for s in ev.stations:
        idx = np.flatnonzero(ev.origins == s)
        order = idx[np.argsort(ev.arrivals[idx], kind="mergesort")]
        out = res.riders[s]
        train[order] = out.train
        dep[order] = out.departure
    return res, train, dep


def gen_event_day(spec: ScenarioSpec, day: date, with_baseline: bool = True
                  ) -> tuple[list[TapEvent], GroundTruth | None]:
    """Baseline taps plus event riders whose exits follow the simulated boarding."""
    taps = gen_baseline_day(spec, day) if with_baseline else []
    ev = spec.event
    if ev is None or ev.n_riders == 0:
        return taps, None
    base = date_seconds(day)
    res, train, dep = board_event(ev, base)
    rng = stream(spec.seed, 2, _day_tag(day))
    jitter = rng.integers(-ev.exit_jitter, ev.exit_jitter + 1, ev.n_riders) if ev.exit_jitter else \
        np.zeros(ev.n_riders, dtype=np.int64)
    arrivals = base + ev.arrivals
    # riders the scheduled trains never carried take the regular service that follows
    for s in ev.stations:
        idx = np.flatnonzero((ev.origins == s) & (train == UNSERVED))
        if idx.size:
            last = max(base + t[s] for t in ev.trains if s in t)
            after = last + AFTER_HEADWAY * (1 + np.maximum(arrivals[idx] - last, 0) // AFTER_HEADWAY)
            dep[idx] = after
    exits = np.empty(ev.n_riders, dtype=np.int64)
    cards = []
    for i in range(ev.n_riders):
        o, d = ev.origins[i], ev.destinations[i]
        exits[i] = max(dep[i] + travel_time(spec.network, o, d) + int(jitter[i]), arrivals[i])
        cards.append(f"E{day:%Y%m%d}-{i:06d}")
    for i in range(ev.n_riders):
        taps.append(TapEvent(cards[i], int(arrivals[i]), UseType.ENTRY, str(ev.origins[i])))
        taps.append(TapEvent(cards[i], int(exits[i]), UseType.EXIT, str(ev.destinations[i])))
    taps.sort(key=lambda t: (t.timestamp, t.card_id, t.use_type.value))
    truth = GroundTruth(day, ev.event_station, list(ev.stations), ev.capacity,
                        [{s: base + t for s, t in tr.items()} for tr in ev.trains], cards,
                        ev.origins, ev.destinations, arrivals, train, dep, exits, res, ev.selected)
    return taps, truth


def answer_key(truth: GroundTruth) -> dict:
    rows = [
        {"train": r.train_index, "station": r.station, "departure": hms(r.departure), "d": r.new_demand,
         "r": r.total_demand, "l": r.left_behind, "proportion": round(r.proportion_left_behind, 6)}
        for r in truth.sim.rows
    ]
    return {
        "report_version": 1,
        "date": truth.day.isoformat(),
        "event_station": truth.event_station,
        "stations": truth.stations,
        "capacity": truth.capacity,
        "trains": [{"index": i, "departures": {s: hms(t) for s, t in tr.items()}}
                   for i, tr in enumerate(truth.trains)],
        "n_riders": int(len(truth.card_ids)),
        "n_selected": None if truth.selected is None else int(np.sum(truth.selected)),
        "unserved": int(np.sum(truth.train == UNSERVED)),
        "left_behind": rows,
    }


def write_answer_key(truth: GroundTruth, json_dest, riders_dest=None) -> None:
    with open(json_dest, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(answer_key(truth), indent=2, sort_keys=True) + "\n")
    if riders_dest is None:
        return
    with open(riders_dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["card_id", "origin", "destination", "arrival", "train", "departure", "exit"])
        for i, card in enumerate(truth.card_ids):
            w.writerow([card, truth.origins[i], truth.destinations[i], hms(truth.arrivals[i]),
                        int(truth.train[i]), hms(truth.departures[i]), hms(truth.exits[i])])


# ---------------------------------------------------------------------------
# arrival shapes


def ramp_arrivals(rng: np.random.Generator, lo: int, hi: int, n: int, ramp: int = 120) -> np.ndarray:
    """``n`` integer times strictly inside (lo, hi); density rises linearly over the first ``ramp`` s.

    The ramp mimics riders who just missed a train: few arrive right after it leaves.
    """
    length = hi - lo
    if length < 2 or n == 0:
        return np.full(n, hi if length < 2 else lo + 1, dtype=np.int64)
    r = min(ramp, length - 1)
    u = rng.random(n)
    total = length - r / 2
    x = np.where(u * total < r / 2, np.sqrt(2 * u * total * max(r, 1e-9)), u * total + r / 2)
    return np.sort(np.clip(lo + np.floor(x).astype(np.int64), lo + 1, hi - 1))


def per_train_arrivals(rng: np.random.Generator, trains: Sequence[Mapping[str, int]], station: str,
                       demand: Sequence[int], start: int, ramp: int = 120,
                       last_at_departure: bool = False) -> np.ndarray:
    """Arrivals at ``station`` with ``demand[i]`` riders between the previous stopping train and train i.

    With ``last_at_departure`` the latest rider of each interval arrives at the
    departure second itself.
    """
    out, prev = [], start
    for tr, n in zip(trains, demand):
        if station not in tr:
            if n:
                raise ValueError(f"demand at {station} for a train that skips it")
            continue
        t = tr[station]
        a = ramp_arrivals(rng, prev, t, int(n), ramp)
        if last_at_departure and n:
            a[-1] = t
        out.append(a)
        prev = t
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def shaped_arrivals(rng: np.random.Generator, weights: Sequence[float], n: int, start: int,
                    bin_width: int = 300) -> np.ndarray:
    """``n`` arrivals spread over bins in proportion to ``weights``, uniform within a bin."""
    w = np.asarray(weights, dtype=float)
    counts = rng.multinomial(n, w / w.sum())
    parts = [start + k * bin_width + rng.integers(0, bin_width, c) for k, c in enumerate(counts)]
    return np.sort(np.concatenate(parts)).astype(np.int64)


# ---------------------------------------------------------------------------
# Sept-22 shaped fixture

FIXTURE_DAY = date(2018, 9, 22)
FIXTURE_CAPACITY = 707
FIXTURE_WINDOW = (20 * 3600 + 40 * 60, 22 * 3600)
FIXTURE_PEAK = (21 * 3600, 22 * 3600)
FIXTURE_DEPARTURES = ["20:52", "21:00", "21:09", "21:12", "21:16", "21:20", "21:25", "21:29", "21:34",
                      "21:39", "21:45", "21:49", "22:00"]
FIXTURE_SKIPS = (2, 6, 10)
# new riders per train: upstream station, then event station
FIXTURE_UPSTREAM_DEMAND = [250, 300, 0, 500, 150, 300, 0, 450, 300, 250, 0, 350, 250]
FIXTURE_EVENT_DEMAND = [300, 496, 784, 524, 302, 170, 400, 372, 375, 300, 350, 250, 400]
FIXTURE_SELECTED = 2392
SELECTED_DESTINATIONS = ("EDGE", "EL", "DEC", "AVON", "KENS")
NEAR_DESTINATIONS = ("FP", "GSU", "KM", "INMAN")
FIXTURE_RAMP = 120


def _hm(text: str) -> int:
    h, m = text.split(":")
    return int(h) * 3600 + int(m) * 60


def sept22_spec(seed: int = 22, network: NetworkModel | None = None) -> ScenarioSpec:
    """Thirteen eastbound trains after a stadium event, three of them skipping Vine City.

    All eastbound riders from Vine City and Dome/GWCC are generated; exactly
    ``FIXTURE_SELECTED`` of them ride to the five far-east stations used for
    clustering, the rest to the nearer stations. Trains run at capacity 707.
    """
    net = network or demo_network()
    up, ev_station = "VC", "DOME"
    lag = travel_time(net, up, ev_station)
    trains = []
    for i, hm in enumerate(FIXTURE_DEPARTURES):
        t = _hm(hm)
        trains.append({ev_station: t} if i in FIXTURE_SKIPS else {up: t - lag, ev_station: t})
    rng = stream(seed, 3)
    start = FIXTURE_WINDOW[0]
    a_up = per_train_arrivals(rng, trains, up, FIXTURE_UPSTREAM_DEMAND, start, FIXTURE_RAMP,
                              last_at_departure=True)
    a_ev = per_train_arrivals(rng, trains, ev_station, FIXTURE_EVENT_DEMAND, start, FIXTURE_RAMP)
    origins = np.array([up] * len(a_up) + [ev_station] * len(a_ev), dtype=object)
    arrivals = np.concatenate([a_up, a_ev])
    n = len(arrivals)
    # the riders defining each upstream departure always belong to the clustered set
    anchors = np.flatnonzero(np.isin(a_up, [t[up] for t in trains if up in t]))
    pool = np.setdiff1d(np.arange(n), anchors)
    picked = rng.choice(pool, FIXTURE_SELECTED - len(anchors), replace=False)
    selected = np.zeros(n, dtype=bool)
    selected[anchors] = True
    selected[picked] = True
    dest = np.empty(n, dtype=object)
    dest[selected] = np.array(SELECTED_DESTINATIONS, dtype=object)[
        rng.integers(0, len(SELECTED_DESTINATIONS), int(selected.sum()))]
    dest[~selected] = np.array(NEAR_DESTINATIONS, dtype=object)[
        rng.integers(0, len(NEAR_DESTINATIONS), int((~selected).sum()))]
    event = EventSpec(ev_station, [up, ev_station], trains, FIXTURE_CAPACITY, origins, arrivals, dest,
                      selected=selected)
    return ScenarioSpec(seed, net, event=event, name="sept22")


# ---------------------------------------------------------------------------
# capacity-recovery scenarios


def capacity_scenario(seed: int, network: NetworkModel | None = None, n_trains: int = 12,
                      exit_jitter: int = 15) -> ScenarioSpec:
    """Random headways and demand around a random true capacity in [400, 900].

    Nine of the first ``n_trains - 1`` intervals bring more riders than a
    train holds, so most trains leave riders behind.
    """
    net = network or demo_network()
    rng = stream(seed, 4)
    cap = int(rng.integers(400, 901))
    up, ev_station = "VC", "DOME"
    lag = travel_time(net, up, ev_station)
    head = rng.integers(180, 421, n_trains)
    t0 = 21 * 3600
    times = t0 + np.cumsum(head)
    skips = set(rng.choice(np.arange(1, n_trains - 1), 2, replace=False).tolist())
    trains = [{ev_station: int(t)} if i in skips else {up: int(t) - lag, ev_station: int(t)}
              for i, t in enumerate(times)]
    # heavy event-station demand on most trains, lighter upstream demand
    heavy = np.zeros(n_trains, dtype=bool)
    heavy[rng.choice(n_trains - 1, min(9, n_trains - 1), replace=False)] = True
    d_ev = np.where(heavy, rng.uniform(1.0, 1.35, n_trains), rng.uniform(0.2, 0.5, n_trains)) * cap
    d_up = np.array([0 if i in skips else rng.uniform(0.1, 0.35) * cap for i in range(n_trains)])
    d_ev[-1] = 0.3 * cap  # the final train clears the platform
    a_up = per_train_arrivals(rng, trains, up, np.rint(d_up).astype(int), t0, 120, last_at_departure=True)
    a_ev = per_train_arrivals(rng, trains, ev_station, np.rint(d_ev).astype(int), t0, 120)
    origins = np.array([up] * len(a_up) + [ev_station] * len(a_ev), dtype=object)
    arrivals = np.concatenate([a_up, a_ev])
    dest = np.array(SELECTED_DESTINATIONS, dtype=object)[rng.integers(0, len(SELECTED_DESTINATIONS),
                                                                      len(arrivals))]
    event = EventSpec(ev_station, [up, ev_station], trains, cap, origins, arrivals, dest, exit_jitter)
    return ScenarioSpec(seed, net, event=event, name=f"capacity-{seed}")


# ---------------------------------------------------------------------------
# single-station game days

GAME_BEFORE, GAME_AFTER = 40 * 60, 80 * 60
GAME_EAST_SHARE, GAME_PEAK_SHARE = 0.92, 0.68


def game_profile(n_bins: int = 24) -> np.ndarray:
    """Relative arrival weights per 5-minute bin around the adjusted end: a trickle, then a surge."""
    x = np.arange(n_bins) * 5 - 40 + 2.5  # bin centre, minutes after the end
    surge = np.exp(-0.5 * ((x - 12) / 9) ** 2)
    tail = 0.25 * np.exp(-np.maximum(x, 0) / 30)
    early = np.where(x < 0, 0.08, 0.0)
    return surge + tail + early


@dataclass
class GameScenario:
    name: str
    spec: ScenarioSpec
    end_time: int          # seconds after midnight
    predicted_ridership: float


def game_scenario(seed: int, index: int, capacity: int = 707, network: NetworkModel | None = None
                  ) -> GameScenario:
    """One event-station game: an evenly spaced actual service against a surging crowd.

    The service runs from five minutes before the adjusted end to the window
    end with at most one train more than the crowd strictly needs.
    """
    net = network or demo_network()
    rng = stream(seed, 5, index)
    end = 21 * 3600 + int(rng.integers(-20, 21)) * 60
    window_start = end - GAME_BEFORE
    event_riders = int(rng.integers(6000, 9001))
    riders = int(round(event_riders * GAME_EAST_SHARE * GAME_PEAK_SHARE * rng.uniform(0.95, 1.05)))
    arrivals = shaped_arrivals(rng, game_profile() * rng.uniform(0.9, 1.1, 24), riders, window_start)
    n_actual = int(np.ceil(riders / capacity)) + int(rng.integers(0, 2))
    times = np.rint(np.linspace(end - 300, end + GAME_AFTER, n_actual)).astype(np.int64)
    trains = [{"DOME": int(t)} for t in times]
    dest = np.array(SELECTED_DESTINATIONS + NEAR_DESTINATIONS, dtype=object)[
        rng.integers(0, 9, riders)]
    origins = np.array(["DOME"] * riders, dtype=object)
    event = EventSpec("DOME", ["DOME"], trains, capacity, origins, arrivals, dest)
    # the forecast misses the realized crowd by several percent either way
    predicted = event_riders * rng.uniform(0.92, 1.12)
    return GameScenario(f"game-{index}", ScenarioSpec(seed, net, event=event, name=f"game-{index}"), end,
                        predicted)


# ---------------------------------------------------------------------------
# prediction rows

SPORTS = ("basketball", "football", "soccer")


def prediction_dataset(seed: int, n: int = 130, slope: float = 0.174, intercept: float = -1200.0,
                       noise: float = 300.0, attendance_range: tuple[float, float] = (15000, 75000)):
    """Feature rows whose target is linear in attendance plus a residual the forest can learn.

    The residual (a boost for close double-event days, a dip on weekends) is
    drawn independently of attendance, so OLS on attendance alone stays unbiased.
    """
    from .predict.features import NO_LOCATION, NONE, FeatureRow

    rng = stream(seed, 6)
    first = date(2017, 1, 1).toordinal()
    rows = []
    for i in range(n):
        att = float(rng.uniform(*attendance_range))
        day = date.fromordinal(first + int(rng.integers(0, 900)))
        two = bool(rng.random() < 0.35)
        week = day.weekday() >= 5
        gap = float(rng.integers(60, 600)) if two else 0.0
        att2 = float(rng.integers(2000, 30000)) if two else 0.0
        residual = 1000.0 * (two and gap < 240) - 500.0 * week
        y = intercept + slope * att + residual + rng.normal(0.0, noise)
        rows.append(FeatureRow(
            date=day, category=SPORTS[i % 3], location="Dome", attendance=att,
            wpdiff=float(rng.uniform(-0.5, 0.5)), regularized_margin=float(rng.normal()),
            category2="expo" if two else NONE, location2="GWCC" if two else NO_LOCATION,
            attendance2=att2, time_difference=gap, two_event=two, week=week, month=day.month,
            target_post_event=float(y), target_whole_day=float(y * 1.4)))
    return rows
