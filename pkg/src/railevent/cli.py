"""Command-line front end.

Every subcommand reads CSV/JSON inputs and writes CSV tables plus, where
useful, a JSON report carrying ``report_version``. Options may also come from
a ``--config`` file of ``key = value`` lines (``#`` starts a comment; keys are
option names with dashes or underscores); flags on the command line win.

Exit status: 0 on success, 2 on usage errors, 1 on data errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import boardsim, capacity, scheduleopt, signatures, synthgen, tables
from .ingest import IngestError, UseType, chain_trips, load_network, parse_taps, read_trips, save_network, \
    write_taps, write_trips
from .pipeline import analyze_event
from .timeutil import date_seconds, hms

REPORT_VERSION = 1


class UsageError(Exception):
    pass


def _dump(doc: dict, dest) -> None:
    doc = {"report_version": REPORT_VERSION, **doc}
    Path(dest).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _csv_list(text) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()] if text else []


def _window(text: str, day: date) -> tuple[int, int]:
    try:
        a, b = text.split("-")
    except ValueError:
        raise UsageError(f"window must look like HH:MM-HH:MM, got {text!r}") from None
    return tables.parse_clock(a, day), tables.parse_clock(b, day)


def _date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise UsageError(f"bad date {text!r}, expected YYYY-MM-DD") from None


def _direction(text: str) -> UseType:
    t = text.lower()
    if t not in ("entry", "exit"):
        raise UsageError("--direction must be entry or exit")
    return UseType.ENTRY if t == "entry" else UseType.EXIT


def _grid(text: str):
    try:
        lo, hi, step = (int(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must look like LO:HI:STEP, got {text!r}") from None
    return lo, hi, step


# ---------------------------------------------------------------------------
# commands


def cmd_chain(args) -> None:
    taps = parse_taps(args.taps)
    trips, anomalies = chain_trips(taps, int(float(args.max_trip_hours) * 3600))
    out = Path(args.out) if args.out else Path(args.taps).with_name("trips.csv")
    write_trips(trips, out)
    if args.anomalies:
        with open(args.anomalies, "w", encoding="utf-8", newline="") as fh:
            fh.write("kind,card_id,timestamp,station_id,detail\n")
            for a in anomalies:
                fh.write(f"{a.kind},{a.card_id},{a.timestamp},{a.station_id},{a.detail}\n")
    print(f"{len(trips)} trips, {len(anomalies)} anomalies -> {out}")


def _baseline_signature(taps, args, day_type, exclude):
    days = sorted({signatures.assign_bin(t.timestamp, args.bin_width, args.day_start_hour)[0] for t in taps})
    band = tuple(float(v) for v in _csv_list(args.band))
    return signatures.build_signature(taps, args.station, _direction(args.direction), day_type, days, exclude,
                                      bin_width=args.bin_width, day_start_hour=args.day_start_hour, band=band,
                                      min_days=args.min_days)


def cmd_signature(args) -> None:
    _need(args, "taps", "station", "out")
    taps = parse_taps(args.taps)
    day_type = signatures.DayType[args.day_type.upper()]
    sig = _baseline_signature(taps, args, day_type, [_date(d) for d in _csv_list(args.exclude)])
    signatures.write_signature_csv(sig, args.out)
    print(f"signature over {sig.n_days} days -> {args.out}")


def cmd_event_ridership(args) -> None:
    _need(args, "taps", "station", "date", "out")
    taps = parse_taps(args.taps)
    day = _date(args.date)
    exclude = [day] + [_date(d) for d in _csv_list(args.exclude)]
    sig = _baseline_signature(taps, args, signatures.day_type_of(day), exclude)
    counts = signatures.event_day_counts(taps, args.station, _direction(args.direction), day, args.bin_width,
                                         args.day_start_hour)
    window = None
    if args.window:
        a, b = _window(args.window, day)
        base = signatures.service_day_start(day, args.day_start_hour)
        window = ((a - base) // args.bin_width, (b - 1 - base) // args.bin_width)
    est = signatures.estimate_event_ridership(sig, counts, args.station, window)
    signatures.write_estimate_csv(est, sig, args.out)
    if args.report:
        _dump({"station": args.station, "date": day.isoformat(), "total": est.total,
               "upper_bound": est.upper_bound, "exceeded": est.exceeded,
               "first_bin": est.t_start, "last_bin": est.t_end, "baseline_days": sig.n_days}, args.report)
    print(f"event riders {est.total:.0f} (upper bound {est.upper_bound:.0f})")


def cmd_recover_schedule(args) -> None:
    _need(args, "trips", "network", "event_station", "date", "out")
    trips = read_trips(args.trips)
    net = load_network(args.network)
    day = _date(args.date)
    window = _window(args.window, day) if args.window else None
    refine = [int(v) for v in _csv_list(args.refine)]
    ea = analyze_event(trips, net, args.event_station, _csv_list(args.stations),
                       cluster_destinations=_csv_list(args.destinations) or None, direction=args.direction,
                       window=window, min_cluster_size=args.min_cluster_size, min_samples=args.min_samples,
                       refine=refine)
    out = _outdir(args.out)
    from .traincluster import write_assignments_csv, write_schedule_csv
    write_assignments_csv(ea.clustered, ea.clusters, out / "assignments.csv")
    write_schedule_csv(ea.schedule, out / "schedule.csv")
    tables.write_arrivals_csv(ea.arrivals(), out / "arrivals.csv")
    tables.write_arrivals_csv({args.event_station: ea.adjusted_arrivals()}, out / "adjusted_arrivals.csv")
    tables.write_observed_csv(ea.observed_rows(), args.event_station, out / "observed.csv")
    _dump({
        "date": day.isoformat(), "event_station": args.event_station, "stations": ea.stations,
        "n_riders": len(ea.riders), "n_clustered": len(ea.clustered), "n_clusters": len(ea.clusters),
        "noise": len(ea.clustered) - sum(len(c.members) for c in ea.clusters),
        "assigned": len(ea.assignment),
        "departures": [hms(c.departure_estimate) for c in ea.clusters],
        "skips": {s: ea.schedule.skip_count(s) for s in ea.stations},
        "warnings": [{"train": w.train_index, "station": w.station, "message": w.message}
                     for w in ea.schedule.warnings],
        "dropped": {"off_path": ea.report.off_path, "bad_wait": ea.report.bad_wait, "flagged": ea.report.flagged},
    }, out / "report.json")
    print(f"{len(ea.clusters)} trains recovered -> {out}")


def _sim_inputs(args, cap: int):
    arrivals = tables.read_arrivals_csv(args.arrivals)
    if not arrivals:
        raise IngestError("no arrivals", None, str(args.arrivals))
    day = _date(args.date) if getattr(args, "date", None) else tables.service_date(arrivals)
    trains = tables.read_schedule_csv(args.schedule, day, cap)
    stations = tables.stations_of(trains, _csv_list(getattr(args, "stations", None)))
    if stations == ["ANCHOR"]:
        arrivals = {"ANCHOR": np.sort(np.concatenate(list(arrivals.values())))}
    return trains, stations, {s: arrivals.get(s, np.zeros(0, dtype=np.int64)) for s in stations}


def cmd_simulate(args) -> None:
    _need(args, "schedule", "arrivals", "capacity", "out")
    trains, stations, arrivals = _sim_inputs(args, args.capacity)
    res = boardsim.simulate_boarding(boardsim.SimInput(trains, stations, arrivals))
    boardsim.write_left_behind_csv(res, args.out)
    if args.report:
        _dump(boardsim.summary(res), args.report)
    print(f"{res.total_boarded} of {res.total_arrivals} riders boarded")


def cmd_estimate_capacity(args) -> None:
    _need(args, "schedule", "arrivals", "observed", "out")
    station, observed = tables.read_observed_csv(args.observed, args.denominator)
    trains, stations, arrivals = _sim_inputs(args, 1)
    est = capacity.estimate_capacity(trains, stations, arrivals, observed, station, _grid(args.grid),
                                     args.denominator)
    out = _outdir(args.out)
    capacity.write_loss_curve_csv(est, out / "loss_curve.csv")
    _dump({"station": station, "best_capacity": est.best_capacity, "best_loss": est.best_loss,
           "denominator": est.denominator, "observed": est.observed, "simulated_at_best": est.simulated_at_best,
           "note": est.note}, out / "report.json")
    print(f"best capacity {est.best_capacity} (MAE {est.best_loss:.4f})")


def cmd_stability(args) -> None:
    _need(args, "schedule", "arrivals", "observed", "seed", "out")
    station, observed = tables.read_observed_csv(args.observed, args.denominator)
    trains, stations, arrivals = _sim_inputs(args, 1)
    rep = capacity.stability_analysis(trains, stations, arrivals, observed, station, _grid(args.grid),
                                      args.runs, args.seed, args.noise_scale, args.denominator)
    out = _outdir(args.out)
    capacity.write_stability_csv(rep, out / "stability.csv")
    _dump({"runs": rep.runs, "seed": rep.seed, "noise_scale_minutes": rep.noise_scale_minutes, "q1": rep.q1,
           "median": rep.median, "mean": rep.mean, "q3": rep.q3, "estimates": rep.estimates}, out / "report.json")
    print(f"capacity quartiles {rep.q1:g} / {rep.median:g} / {rep.q3:g}")


def cmd_optimize_schedule(args) -> None:
    _need(args, "capacity", "out")
    if args.arrivals:
        arrivals = tables.read_arrivals_csv(args.arrivals)
        times = np.sort(np.concatenate([arrivals[s] for s in (_csv_list(args.stations) or arrivals)]))
        window = None
        if args.window:
            window = _window(args.window, tables.service_date(arrivals))
            times = times[(times >= window[0]) & (times < window[1])]
        sched = scheduleopt.optimal_schedule(times, args.capacity)
        doc = {"mode": "optimal", "n_riders": int(times.size)}
    else:
        _need(args, "curve", "predicted", "end", "date")
        day = _date(args.date)
        percent = tables.read_curve_csv(args.curve)
        curve = signatures.ThroughputCurve({}, percent, percent)
        start = tables.parse_clock(args.end, day) - curve.before
        fc = scheduleopt.forecast_arrivals(curve, args.predicted, args.east_share, args.peak_share, args.buffer,
                                           start)
        sched = scheduleopt.propose_schedule(fc, args.capacity)
        doc = {"mode": "proposed", "forecast_total": fc.total, "forecast_bins": fc.bins, **fc.provenance}
    scheduleopt.write_schedule_csv(sched, args.out)
    doc.update(capacity=args.capacity, n_trains=sched.n_trains, departures=[hms(t) for t in sched.departures],
               headways_seconds=sched.headways())
    if args.report:
        _dump(doc, args.report)
    print(f"{sched.n_trains} trains -> {args.out}")


def _anchor_schedule(path, day, cap, station) -> scheduleopt.Schedule:
    trains = tables.read_schedule_csv(path, day, cap)
    key = "ANCHOR" if all("ANCHOR" in t.departures for t in trains) else station
    deps = [t.departures[key] for t in trains if key in t.departures]
    if not deps:
        raise IngestError(f"no departures at {key}", None, str(path))
    return scheduleopt.Schedule(deps, cap, (deps[0], deps[-1]))


def cmd_compare(args) -> None:
    _need(args, "actual", "proposed", "arrivals", "capacity", "out")
    arrivals = tables.read_arrivals_csv(args.arrivals)
    day = _date(args.date) if args.date else tables.service_date(arrivals)
    station = args.station or next(iter(arrivals))
    times = arrivals[station] if station in arrivals else np.sort(np.concatenate(list(arrivals.values())))
    actual = _anchor_schedule(args.actual, day, args.capacity, station)
    proposed = _anchor_schedule(args.proposed, day, args.capacity, station)
    rep = scheduleopt.compare_schedules(actual, proposed, times, args.capacity)
    scheduleopt.write_comparison_csv({args.name: rep}, args.out)
    if args.report:
        _dump({"capacity": rep.capacity, "train_delta": rep.train_delta, "actual": rep.actual.row(),
               "proposed": rep.proposed.row()}, args.report)
    print(f"avg %LB {100 * rep.actual.avg_left_behind:.1f} -> {100 * rep.proposed.avg_left_behind:.1f}")


def _predict_data(args):
    from .predict import FeatureEncoder, targets
    from .predict.features import read_rows_csv

    rows = read_rows_csv(args.rows)
    enc = FeatureEncoder.fit(rows)
    return rows, enc, enc.transform(rows), targets(rows, args.target)


def _model_spec(args):
    from .predict import ModelSpec

    # the linear model is deterministic, so its seed is only a placeholder
    return ModelSpec(args.model, args.B, args.mtry, args.min_leaf, 0 if args.seed is None else args.seed)


def cmd_predict(args) -> None:
    from .predict import dumps_model, fit_forest, fit_model, loocv, permutation_importance

    _need(args, "rows", "out")
    if args.model != "lr" or args.action == "importance":
        _need(args, "seed")
    spec = _model_spec(args)
    rows, enc, X, y = _predict_data(args)
    if args.action == "fit":
        model = fit_model(spec, X, y, names=enc.names)
        Path(args.out).write_text(dumps_model(model, enc) + "\n", encoding="utf-8")
        print(f"{args.model} model on {len(rows)} rows -> {args.out}")
    elif args.action == "loocv":
        rep = loocv(X, y, spec)
        _dump({"model": args.model, "target": args.target, "B": args.B, "seed": args.seed, **rep.to_dict(),
               "predictions": rep.predictions}, args.out)
        print(f"LOOCV MAE {rep.mae:.2f} MAPE {rep.mape:.4f} RMSE {rep.rmse:.2f}")
    else:
        forest = fit_forest(X, y, args.B, args.mtry, args.min_leaf, args.seed, names=enc.names)
        imp = permutation_importance(forest, X, y, args.seed)
        order = sorted(range(len(imp)), key=lambda j: (-imp[j], j))
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("feature,inc_mse\n")
            for j in order:
                fh.write(f"{enc.names[j]},{imp[j]:.6f}\n")
        print(f"most important: {enc.names[order[0]]}")


def _read_spec(path) -> dict[str, str]:
    return read_config(path)


def cmd_synth(args) -> None:
    _need(args, "seed", "out")
    spec = _read_spec(args.spec) if args.spec else {}
    kind = spec.get("scenario", "sept22")
    out = _outdir(args.out)
    net = synthgen.demo_network()
    save_network(net, out / "network.json")
    if kind == "prediction":
        from .predict.features import write_rows_csv

        rows = synthgen.prediction_dataset(args.seed, int(spec.get("n", 130)))
        write_rows_csv(rows, out / "rows.csv")
        print(f"{len(rows)} feature rows -> {out}")
        return
    if kind == "baseline":
        first = _date(spec.get("start_date", "2018-09-01"))
        days = int(spec.get("days", 14))
        rate = float(spec.get("rate", 5.0))
        stations = _csv_list(spec.get("stations", "DOME,VC"))
        sc = synthgen.ScenarioSpec(args.seed, net, {s: np.full(96, rate) for s in stations})
        taps = []
        for k in range(days):
            taps += synthgen.gen_baseline_day(sc, date.fromordinal(first.toordinal() + k))
        write_taps(taps, out / "taps.csv")
        print(f"{len(taps)} taps -> {out}")
        return
    if kind == "sept22":
        sc, day = synthgen.sept22_spec(args.seed, net), synthgen.FIXTURE_DAY
    elif kind == "capacity":
        sc, day = synthgen.capacity_scenario(args.seed, net), _date(spec.get("date", "2018-06-30"))
    elif kind == "game":
        g = synthgen.game_scenario(args.seed, int(spec.get("index", 0)), int(spec.get("capacity", 707)), net)
        sc, day = g.spec, _date(spec.get("date", "2018-06-30"))
    else:
        raise UsageError(f"unknown scenario {kind!r}")
    taps, truth = synthgen.gen_event_day(sc, day, with_baseline=False)
    write_taps(taps, out / "taps.csv")
    synthgen.write_answer_key(truth, out / "answer_key.json", out / "riders.csv")
    if kind == "game":
        profile = synthgen.game_profile()
        with open(out / "curve.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("offset_min,percent\n")
            for k, v in enumerate(profile / profile.sum()):
                fh.write(f"{5 * k - 40},{float(v)!r}\n")
        _dump({"name": g.name, "end": hms(date_seconds(day) + g.end_time),
               "predicted_ridership": g.predicted_ridership}, out / "game.json")
    print(f"{len(taps)} taps, {len(truth.card_ids)} event riders -> {out}")


# ---------------------------------------------------------------------------
# parser


def read_config(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for k, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise UsageError(f"{path}:{k}: expected key = value")
        key, value = (s.strip() for s in text.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_sim_args(p):
    p.add_argument("--schedule", help="schedule CSV from recover-schedule or optimize-schedule")
    p.add_argument("--arrivals", help="arrivals CSV (station,time)")
    p.add_argument("--stations", help="station travel order, comma separated")
    p.add_argument("--date", help="service date YYYY-MM-DD (default: from arrivals)")


def _add_signature_args(p):
    p.add_argument("--taps")
    p.add_argument("--station")
    p.add_argument("--direction", default="entry")
    p.add_argument("--exclude", help="dates to leave out of the baseline, comma separated")
    p.add_argument("--min-days", type=int, default=8)
    p.add_argument("--bin-width", type=int, default=signatures.BIN_WIDTH)
    p.add_argument("--day-start-hour", type=int, default=signatures.DAY_START_HOUR)
    p.add_argument("--band", default="10,90")


def build_parser() -> tuple[argparse.ArgumentParser, list[argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="railevent", description="Special-event rail ridership toolkit.")
    parser.add_argument("--config", help="key = value file of option defaults")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    leaves = []

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help=argparse.SUPPRESS)
        p.set_defaults(func=fn)
        leaves.append(p)
        return p

    p = add("chain", cmd_chain, "chain taps into trips")
    p.add_argument("taps")
    p.add_argument("--out")
    p.add_argument("--anomalies")
    p.add_argument("--max-trip-hours", type=float, default=4.0)

    p = add("signature", cmd_signature, "baseline signature for one station")
    _add_signature_args(p)
    p.add_argument("--day-type", default="weekday")
    p.add_argument("--out")

    p = add("event-ridership", cmd_event_ridership, "riders above the baseline band on an event day")
    _add_signature_args(p)
    p.add_argument("--date")
    p.add_argument("--window", help="HH:MM-HH:MM to search for exceedances")
    p.add_argument("--out")
    p.add_argument("--report")

    p = add("recover-schedule", cmd_recover_schedule, "cluster riders into trains and recover the schedule")
    p.add_argument("--trips")
    p.add_argument("--network")
    p.add_argument("--event-station")
    p.add_argument("--stations", help="upstream boarding stations, comma separated")
    p.add_argument("--destinations", help="destinations used for clustering, comma separated")
    p.add_argument("--direction", default="EAST")
    p.add_argument("--date")
    p.add_argument("--window")
    p.add_argument("--min-cluster-size", type=int, default=50)
    p.add_argument("--min-samples", type=int)
    p.add_argument("--refine", help="first-pass cluster ids to split again")
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, "FIFO boarding simulation")
    _add_sim_args(p)
    p.add_argument("--capacity", type=int)
    p.add_argument("--out")
    p.add_argument("--report")

    for name, fn, help_ in (("estimate-capacity", cmd_estimate_capacity, "fit the effective train capacity"),
                            ("stability", cmd_stability, "capacity estimates under delayed trains")):
        p = add(name, fn, help_)
        _add_sim_args(p)
        p.add_argument("--observed", help="observed proportions CSV")
        p.add_argument("--grid", default="300:1200:1")
        p.add_argument("--denominator", choices=("new", "total"), default="new")
        p.add_argument("--out")
        if name == "stability":
            p.add_argument("--runs", type=int, default=100)
            p.add_argument("--seed", type=int)
            p.add_argument("--noise-scale", type=float, default=1.0)

    p = add("optimize-schedule", cmd_optimize_schedule, "optimal or forecast-driven schedule")
    p.add_argument("--arrivals")
    p.add_argument("--stations")
    p.add_argument("--window")
    p.add_argument("--curve", help="throughput percent series CSV")
    p.add_argument("--predicted", type=float)
    p.add_argument("--end", help="adjusted event end HH:MM")
    p.add_argument("--date")
    p.add_argument("--east-share", type=float, default=0.92)
    p.add_argument("--peak-share", type=float, default=0.68)
    p.add_argument("--buffer", type=float, default=1.10)
    p.add_argument("--capacity", type=int)
    p.add_argument("--out")
    p.add_argument("--report")

    p = add("compare", cmd_compare, "simulate two schedules on the same arrivals")
    p.add_argument("--actual")
    p.add_argument("--proposed")
    p.add_argument("--arrivals")
    p.add_argument("--station")
    p.add_argument("--date")
    p.add_argument("--capacity", type=int)
    p.add_argument("--name", default="event")
    p.add_argument("--out")
    p.add_argument("--report")

    p = add("predict", cmd_predict, "ridership models")
    p.add_argument("action", choices=("fit", "loocv", "importance"))
    p.add_argument("--rows")
    p.add_argument("--target", choices=("post_event", "whole_day"), default="post_event")
    p.add_argument("--model", choices=("lr", "rf", "lr+rf"), default="lr+rf")
    p.add_argument("--B", type=int, default=800)
    p.add_argument("--mtry", type=int)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("synth", cmd_synth, "generate synthetic data with an answer key")
    p.add_argument("--spec", help="key = value scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser, leaves


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, leaves = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    try:
        known, _ = pre.parse_known_args(argv)
        if known.config:
            cfg = read_config(known.config)
            for p in leaves:
                valid = {a.dest for a in p._actions}
                p.set_defaults(**{k: v for k, v in cfg.items() if k in valid and k != "config"})
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"railevent: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        print("railevent: error: a command is required", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"railevent: error: {exc}", file=sys.stderr)
        return 2
    except IngestError as exc:
        print(f"railevent: data error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"railevent: data error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
