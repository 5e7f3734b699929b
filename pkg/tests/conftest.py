from __future__ import annotations

from dataclasses import dataclass

import pytest

from railevent import synthgen
from railevent.ingest import chain_trips
from railevent.pipeline import EventAnalysis, analyze_event
from railevent.timeutil import date_seconds


@dataclass
class FixtureRun:
    truth: synthgen.GroundTruth
    analysis: EventAnalysis
    trips: list
    anomalies: list
    base: int


def run_fixture(seed: int = 22) -> FixtureRun:
    net = synthgen.demo_network()
    spec = synthgen.sept22_spec(seed, net)
    day = synthgen.FIXTURE_DAY
    taps, truth = synthgen.gen_event_day(spec, day, with_baseline=False)
    trips, anomalies = chain_trips(taps)
    base = date_seconds(day)
    window = (base + synthgen.FIXTURE_WINDOW[0], base + synthgen.FIXTURE_WINDOW[1])
    ea = analyze_event(trips, net, "DOME", ["VC"], cluster_destinations=synthgen.SELECTED_DESTINATIONS,
                       window=window)
    return FixtureRun(truth, ea, trips, anomalies, base)


@pytest.fixture(scope="session")
def net():
    return synthgen.demo_network()


@pytest.fixture(scope="session")
def sept22():
    return run_fixture()


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_VERDICTS, [])

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        lines.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
