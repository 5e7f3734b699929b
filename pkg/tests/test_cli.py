from __future__ import annotations

import csv
import json

from railevent.cli import main


def synth(tmp_path, *lines, seed=7, name="data"):
    spec = tmp_path / f"{name}.spec"
    spec.write_text("\n".join(lines) + "\n", encoding="utf-8")
    out = tmp_path / name
    assert main(["synth", "--spec", str(spec), "--seed", str(seed), "--out", str(out)]) == 0
    return out


def test_synth_then_chain_has_no_anomalies(tmp_path, capsys):
    data = synth(tmp_path, "scenario = capacity")
    assert main(["chain", str(data / "taps.csv"), "--anomalies", str(tmp_path / "anom.csv")]) == 0
    assert "0 anomalies" in capsys.readouterr().out
    with open(tmp_path / "anom.csv", encoding="utf-8") as fh:
        assert len(list(csv.reader(fh))) == 1
    assert (data / "trips.csv").exists()


def test_fixture_capacity_report(tmp_path):
    data = synth(tmp_path, "scenario = sept22", seed=22)
    assert main(["chain", str(data / "taps.csv")]) == 0
    rec = tmp_path / "rec"
    assert main(["recover-schedule", "--trips", str(data / "trips.csv"), "--network", str(data / "network.json"),
                 "--event-station", "DOME", "--stations", "VC", "--destinations", "EDGE,EL,DEC,AVON,KENS",
                 "--direction", "EAST", "--date", "2018-09-22", "--window", "20:40-22:00", "--out", str(rec)]) == 0
    cap = tmp_path / "cap"
    assert main(["estimate-capacity", "--schedule", str(rec / "schedule.csv"), "--arrivals",
                 str(rec / "arrivals.csv"), "--stations", "VC,DOME", "--observed", str(rec / "observed.csv"),
                 "--denominator", "total", "--out", str(cap)]) == 0
    report = json.loads((cap / "report.json").read_text(encoding="utf-8"))
    assert report["best_capacity"] == 707 and report["report_version"] == 1


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["synth", "--out", str(tmp_path / "x")]) == 2
    assert "--seed" in capsys.readouterr().err
    assert main(["stability", "--observed", "o.csv"]) == 2


def test_data_error_names_file_and_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("card_id,timestamp,use_type,station_id\nA,not a time,Entry (Tag On),DOME\n", encoding="utf-8")
    assert main(["chain", str(bad)]) == 1
    assert "bad.csv:2" in capsys.readouterr().err


def test_config_defaults_and_flag_precedence(tmp_path):
    spec = tmp_path / "p.spec"
    spec.write_text("scenario = prediction\nn = 12\n", encoding="utf-8")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# defaults\nseed = 3\nout = {tmp_path / 'from_cfg'}\nspec = {spec}\n", encoding="utf-8")
    assert main(["synth", "--config", str(cfg)]) == 0
    assert main(["synth", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / "flag")]) == 0
    assert main(["synth", "--spec", str(spec), "--seed", "4", "--out", str(tmp_path / "direct")]) == 0
    rows = lambda d: (tmp_path / d / "rows.csv").read_bytes()
    assert rows("flag") == rows("direct") != rows("from_cfg")


def test_bad_config_line_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed 3\n", encoding="utf-8")
    assert main(["synth", "--config", str(cfg)]) == 2
