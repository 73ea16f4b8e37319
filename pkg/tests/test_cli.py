import csv
import io
import json
import subprocess
import sys

import pytest

from zigcheck.cli import build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_check_q1(capsys):
    code, out, _ = run(capsys, "check", "--scenario", "ha", "--strategy", "time", "--threshold", "12",
                       "--question", "q1", "--months", "12")
    assert code == 0
    head, row = rows(out)
    assert head == ["scenario", "strategy", "threshold", "question", "t_months", "value", "value2"]
    assert row[:5] == ["ha", "time", "12", "q1", "12"]
    assert float(row[5]) == pytest.approx(0.11, abs=0.015)


def test_check_q4_to_file(capsys, tmp_path):
    out_file = tmp_path / "q4.csv"
    code, out, _ = run(capsys, "check", "--scenario", "HA", "--strategy", "time", "--threshold", "6",
                       "--question", "q4", "--out", str(out_file))
    assert code == 0 and out == ""
    _, row = rows(out_file.read_text())
    assert row[4] == "" and float(row[6]) == pytest.approx(91.1, abs=1.0)
    assert float(row[5]) + float(row[6]) == pytest.approx(100, abs=1e-9)


def test_check_override(capsys):
    base = run(capsys, "check", "--scenario", "se", "--strategy", "join", "--threshold", "1",
               "--question", "q3", "--months", "2")[1]
    fast = run(capsys, "check", "--scenario", "se", "--strategy", "join", "--threshold", "1",
               "--question", "q3", "--months", "2", "--override", "r_reset=24")[1]
    assert float(rows(fast)[1][5]) < 1e-3 < float(rows(base)[1][5])


def test_check_missing_option(capsys):
    code, _, err = run(capsys, "check", "--scenario", "ha", "--strategy", "time", "--question", "q2")
    assert code == 2 and "--threshold" in err
    code, _, err = run(capsys, "check", "--scenario", "ha", "--strategy", "time", "--threshold", "3",
                       "--question", "q1")
    assert code == 2 and "--months" in err


def test_sweep_registry_defaults(capsys, tmp_path):
    out_file = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--scenario", "ha", "--strategy", "time", "--question", "q1",
                     "--out", str(out_file))
    assert code == 0
    data = rows(out_file.read_text())
    assert len(data) == 1 + 240
    assert {r[2] for r in data[1:]} == {"3", "6", "9", "12"}


def test_sweep_explicit_grid_and_workers_identical(capsys):
    args = ["sweep", "--scenario", "ha", "--strategy", "leave", "--question", "q2", "--grid", "1:6:1"]
    a = run(capsys, *args)[1]
    b = run(capsys, *args, "--workers", "3")[1]
    assert a == b and len(rows(a)) == 7


def test_sweep_rejects_empty_grid(capsys):
    with pytest.raises(SystemExit):
        main(["sweep", "--scenario", "ha", "--strategy", "time", "--question", "q1", "--grid", "5:1:1"])
    assert "empty grid" in capsys.readouterr().err


def test_sweep_partial_output(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"solver": {"max_iter": 1, "max_iter_gs": 1}}))
    code, out, err = run(capsys, "sweep", "--config", str(cfg), "--scenario", "ha", "--strategy", "time",
                         "--question", "q2", "--grid", "3:6:3")
    assert code == 1
    assert out.splitlines()[-1].startswith("#partial")
    assert "aborted" in err


def test_advise_example2(capsys, tmp_path):
    out_file = tmp_path / "advice.json"
    code, out, _ = run(capsys, "advise", "--scenario", "ha", "--months", "60",
                       "--require", "conf:0.10", "--require", "recovery:12:0.15", "--require", "recovery:6:0.45",
                       "--require", "recovery:3:0.65", "--require", "efficiency:95", "--out", str(out_file))
    assert code == 0
    assert "chosen: time-based, threshold 6" in out
    doc = json.loads(out_file.read_text())
    assert doc["chosen"] == {"strategy": "time", "threshold": 6}
    assert doc["satisfying"] == {"time": [6], "leave": [], "join": []}
    assert len(doc["evidence"]) == 12 * 5


def test_advise_from_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": {"name": "ha"},
        "requirements": [{"kind": "steady_state", "bound": 0.1}],
        "candidates": [{"strategy": "time", "grid": "3:12:3"}],
        "run": {"horizon_months": 12},
    }))
    code, out, _ = run(capsys, "advise", "--config", str(cfg))
    assert code == 0 and "time: {3, 6}" in out and "threshold 6" in out


def test_advise_needs_requirement(capsys):
    code, _, err = run(capsys, "advise", "--scenario", "ha")
    assert code == 2 and "requirement" in err


def test_bad_requirement_string(capsys):
    with pytest.raises(SystemExit):
        main(["advise", "--scenario", "ha", "--require", "recovery:0.1"])


def test_simulate(capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", "ha", "--strategy", "time", "--threshold", "12",
                       "--question", "q1", "--months", "12", "--paths", "20000", "--seed", "1")
    assert code == 0
    assert "within 3 sigma" in out and "seed       1" in out and "Philox" in out


def test_max_size(capsys):
    code, out, _ = run(capsys, "max-size", "--scenario", "ha", "--strategy", "time", "--threshold", "3",
                       "--bound", "0", "--cap", "32", "--months", "12")
    assert code == 0 and out.strip() == "0"


def test_cli_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "scenario": {"name": "ha"},
        "strategy": {"kind": "time", "threshold": 3},
        "run": {"question": "q2"},
    }))
    a = rows(run(capsys, "check", "--config", str(cfg))[1])[1]
    b = rows(run(capsys, "check", "--config", str(cfg), "--threshold", "12")[1])[1]
    assert a[2] == "3" and b[2] == "12"
    assert float(a[5]) == pytest.approx(0.045, abs=0.01) and float(b[5]) == pytest.approx(0.16, abs=0.02)


def test_epsilon_flags(capsys):
    args = ["check", "--scenario", "ha", "--strategy", "time", "--threshold", "3", "--question", "q1",
            "--months", "12"]
    loose = float(rows(run(capsys, *args, "--epsilon-transient", "1e-3")[1])[1][5])
    tight = float(rows(run(capsys, *args, "--epsilon-transient", "1e-12", "--epsilon-ss", "1e-11")[1])[1][5])
    assert abs(loose - tight) <= 1e-3


def test_parser_lists_commands():
    text = build_parser().format_help()
    for c in ("check", "sweep", "advise", "simulate", "max-size"):
        assert c in text


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "zigcheck.cli", "check", "--scenario", "se", "--strategy",
                          "time", "--threshold", "12", "--question", "q2"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.startswith("scenario,strategy")
