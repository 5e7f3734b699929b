"""Effective train capacity from left-behind proportions, and its stability
under late-shifted train times."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .boardsim import Demand, TrainRun, demand_table, propagate

DEFAULT_GRID = (300, 1200, 1)


class LengthMismatch(ValueError):
    pass


def mae_loss(observed: Sequence[float], simulated: Sequence[float]) -> float:
    obs = np.asarray(observed, dtype=float)
    sim = np.asarray(simulated, dtype=float)
    if obs.shape != sim.shape:
        raise LengthMismatch(f"{obs.shape} vs {sim.shape}")
    if obs.size == 0:
        raise LengthMismatch("empty vectors")
    return float(np.mean(np.abs(obs - sim)))


def capacity_grid(grid) -> np.ndarray:
    if isinstance(grid, tuple) and len(grid) == 3:
        lo, hi, step = grid
        if lo > hi or step < 1:
            raise ValueError(f"bad grid {grid}")
        return np.arange(lo, hi + 1, step, dtype=np.int64)
    return np.unique(np.asarray(grid, dtype=np.int64))


def _proportions(dem: Demand, total, left, k: int, denominator: str) -> np.ndarray:
    rows = np.flatnonzero(dem.stops[:, k])
    l = left[:, rows, k].astype(float)
    if denominator == "total":
        den = total[:, rows, k].astype(float)
    elif denominator == "new":
        den = np.broadcast_to(dem.new[rows, k].astype(float), l.shape)
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, l / np.where(den > 0, den, 1.0), 0.0)


@dataclass
class CapacityEstimate:
    best_capacity: int
    loss_curve: dict[int, float]
    observed: np.ndarray
    simulated_at_best: np.ndarray
    denominator: str = "new"
    note: str = ("Riders already aboard before the first modelled station are not counted, "
                 "so the estimate is a lower bound on the true load.")

    @property
    def best_loss(self) -> float:
        return self.loss_curve[self.best_capacity]


def estimate_capacity(trains: Sequence[TrainRun], stations: Sequence[str], arrivals, observed: Sequence[float],
                      station: str, grid=DEFAULT_GRID, denominator: str = "new") -> CapacityEstimate:
    """Uniform capacity minimising the MAE between simulated and observed proportions.

    ``observed`` holds one proportion per train that stops at ``station``.
    Ties go to the smallest capacity.
    """
    caps = capacity_grid(grid)
    dem = demand_table(trains, stations, arrivals)
    k = list(stations).index(station)
    obs = np.asarray(observed, dtype=float)
    if obs.shape[0] != int(dem.stops[:, k].sum()):
        raise LengthMismatch(f"{obs.shape[0]} observed values for {int(dem.stops[:, k].sum())} stopping trains")
    total, left, _ = propagate(dem, np.repeat(caps[:, None], len(trains), axis=1))
    sim = _proportions(dem, total, left, k, denominator)
    losses = np.mean(np.abs(sim - obs[None, :]), axis=1)
    best = int(np.argmin(losses))
    return CapacityEstimate(int(caps[best]), {int(c): float(v) for c, v in zip(caps, losses)}, obs,
                            sim[best], denominator)


@dataclass
class StabilityReport:
    estimates: np.ndarray
    q1: float
    q3: float
    mean: float
    median: float
    runs: int
    seed: int
    noise_scale_minutes: float = 1.0
    shifts: list[np.ndarray] = field(default_factory=list, repr=False)


def shift_schedule(trains: Sequence[TrainRun], stations: Sequence[str], shifts: np.ndarray) -> list[TrainRun]:
    """Delay each train by its shift at every station, keeping departures strictly increasing."""
    out = []
    last = {s: None for s in stations}
    for tr, dt in zip(trains, shifts):
        deps = {}
        for s in stations:
            if s not in tr.departures:
                continue
            t = int(tr.departures[s] + dt)
            if last[s] is not None and t <= last[s]:
                t = last[s] + 1
            deps[s] = t
            last[s] = t
        out.append(TrainRun(tr.index, deps, tr.capacity))
    return out


def run_rng(seed: int, run: int) -> np.random.Generator:
    """PCG64 stream for one run, derived from (seed, run)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, run])))


def stability_analysis(trains: Sequence[TrainRun], stations: Sequence[str], arrivals, observed: Sequence[float],
                       station: str, grid=DEFAULT_GRID, runs: int = 100, seed: int = 0,
                       noise_scale: float = 1.0, denominator: str = "new") -> StabilityReport:
    """Re-estimate capacity with every train delayed by |z| minutes, z ~ N(0, 1) per train."""
    estimates, shifts = [], []
    for run in range(runs):
        z = np.abs(run_rng(seed, run).standard_normal(len(trains)))
        dt = np.rint(z * 60.0 * noise_scale).astype(np.int64)
        shifted = shift_schedule(trains, stations, dt)
        est = estimate_capacity(shifted, stations, arrivals, observed, station, grid, denominator)
        estimates.append(est.best_capacity)
        shifts.append(dt)
    e = np.asarray(estimates, dtype=float)
    q1, med, q3 = np.percentile(e, [25, 50, 75], method="linear")
    return StabilityReport(e.astype(np.int64), float(q1), float(q3), float(e.mean()), float(med), runs, seed,
                           noise_scale, shifts)


def write_loss_curve_csv(est: CapacityEstimate, dest) -> None:
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["capacity", "mae"])
        for c, v in est.loss_curve.items():
            w.writerow([c, f"{v:.6f}"])


def write_stability_csv(rep: StabilityReport, dest) -> None:
    values, counts = np.unique(rep.estimates, return_counts=True)
    with open(dest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["capacity", "runs"])
        for v, c in zip(values, counts):
            w.writerow([int(v), int(c)])
