"""Command-line runner: artifacts, exit codes, config precedence, and
byte-level determinism of report.json."""

from __future__ import annotations

import csv
import json

import pytest

from adlkit.cli import CSV_COLUMNS, build_parser, parse_config_file, run


def read(path):
    return path.read_text(encoding="utf-8")


def test_bounds_run_writes_all_artifacts(tmp_path):
    out = tmp_path / "run"
    assert run(["bounds", "--seed", "7", "--out", str(out)]) == 0
    report = json.loads(read(out / "report.json"))
    assert report["command"] == "bounds"
    assert report["seed"] == 7
    assert report["passed"] is True
    assert report["failing_checks"] == []
    assert [s["suite"] for s in report["suites"]] == ["bounds"]
    assert all(r["passed"] for r in report["suites"][0]["rows"])

    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and list(rows[0]) == list(CSV_COLUMNS)
    assert {r["passed"] for r in rows} == {"True"}

    with open(out / "bounds_sweep.csv", newline="") as fh:
        sweep = list(csv.DictReader(fh))
    assert list(sweep[0]) == ["T", "d", "m", "adl_bits", "gen_gap"]
    assert all(float(r["adl_bits"]) > 0 for r in sweep)

    meta = json.loads(read(out / "metadata.json"))
    assert set(meta) == {"started_at", "finished_at", "duration_seconds",
                         "argv", "python", "numpy", "threads"}


def test_missing_seed_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run(["bounds", "--out", str(tmp_path / "x")])
    assert exc.value.code == 2
    assert "--seed is required" in capsys.readouterr().err


def test_unknown_command_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["no-such-suite", "--seed", "1"])
    assert exc.value.code == 2


def test_report_byte_identical_across_reruns_and_out_dirs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["bounds", "--seed", "3", "--out", str(a)]) == 0
    assert run(["bounds", "--seed", "3", "--out", str(b)]) == 0
    assert read(a / "report.json") == read(b / "report.json")
    assert read(a / "summary.csv") == read(b / "summary.csv")
    # different seed still deterministic, but distinct artifacts allowed
    c = tmp_path / "c"
    assert run(["bounds", "--seed", "4", "--out", str(c)]) == 0
    assert json.loads(read(c / "report.json"))["seed"] == 4


def test_report_byte_identical_across_thread_counts(tmp_path, monkeypatch):
    outs = []
    for threads, sub in (("1", "t1"), ("4", "t4")):
        monkeypatch.setenv("ADL_THREADS", threads)
        out = tmp_path / sub
        assert run(["concentration", "--seed", "11", "--trials", "20000",
                    "--d", "12", "--h", "12", "--out", str(out)]) == 0
        outs.append(read(out / "report.json"))
    assert outs[0] == outs[1]


def test_shatter_bundle_reverify(tmp_path):
    first = tmp_path / "first"
    assert run(["shatter", "--seed", "7", "--d", "8", "--h", "10",
                "--n-pairs", "500", "--out", str(first)]) == 0
    bundle = first / "shatter_instance.json"
    assert bundle.exists()
    again = tmp_path / "again"
    assert run(["shatter", "--seed", "7", "--bundle", str(bundle),
                "--n-pairs", "500", "--out", str(again)]) == 0
    rep = json.loads(read(again / "report.json"))
    assert rep["passed"] is True
    # the re-written bundle round-trips byte-for-byte
    assert read(again / "shatter_instance.json") == read(bundle)


def test_shatter_bad_bundle_exits_2(tmp_path):
    bad = tmp_path / "bundle.json"
    bad.write_text("{ not json", encoding="utf-8")
    with pytest.raises(SystemExit) as exc:
        run(["shatter", "--seed", "7", "--bundle", str(bad),
             "--out", str(tmp_path / "o")])
    assert exc.value.code == 2


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# comment line\n"
                   "d = 8\n"
                   "h = 10   # trailing comment\n"
                   "\n"
                   "n_pairs=500\n", encoding="utf-8")
    parsed = parse_config_file(str(cfg))
    assert parsed == {"d": "8", "h": "10", "n_pairs": "500"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("just-a-token\n", encoding="utf-8")
    with pytest.raises(ValueError):
        parse_config_file(str(bad))


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("d=8\nh=10\nn_pairs=500\nseed=42\n", encoding="utf-8")
    out = tmp_path / "run"
    assert run(["shatter", "--config", str(cfg), "--h", "12",
                "--out", str(out)]) == 0
    rep = json.loads(read(out / "report.json"))
    assert rep["seed"] == 42                      # from the file
    assert rep["config"]["h"] == 12               # flag wins
    assert rep["config"]["d"] == "8"              # file value passes through
    assert "out" not in rep["config"]             # paths stay out of the echo


def test_parser_lists_all_suites():
    parser = build_parser()
    text = parser.format_help()
    for name in ("sketch-verify", "neuron-verify", "network-verify",
                 "bounds", "shatter", "concentration", "all"):
        assert name in text
