import json
import re

import numpy as np
import pytest

from junction.cli import main
from junction.sensing import Modality, SensorStream, write_stream_csv
from conftest import scenario_path


class TestValidate:
    def test_fig6_ok(self, capsys):
        assert main(["validate", str(scenario_path("fig6.json"))]) == 0
        assert "OK" in capsys.readouterr().out

    def test_bad_scenario_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        text = scenario_path("fig6.json").read_text().replace(
            '"path": "ped_approach"', '"path": "p9"')
        bad.write_text(text)
        assert main(["validate", str(bad)]) == 2
        assert "p9" in capsys.readouterr().out

    def test_json_mode(self, capsys):
        assert main(["--json", "validate", str(scenario_path("fig6.json"))]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc == {"valid": True, "diagnostics": []}

    def test_missing_file_exit_4(self):
        assert main(["validate", "/nonexistent/file.json"]) == 4


class TestPlace:
    def test_fig6_table_values(self, capsys):
        assert main(["place", str(scenario_path("fig6.json"))]) == 0
        out = capsys.readouterr().out
        assert re.search(r"car.*100\.0 m", out)
        assert re.search(r"cyclist.*50\.0 m", out)
        assert re.search(r"ped.*18\.0 m", out)

    def test_json_exact(self, capsys):
        assert main(["--json", "place", str(scenario_path("fig6.json"))]) == 0
        doc = json.loads(capsys.readouterr().out)
        dist = {row["agent"]: row["distance_m"] for row in doc["placement"]}
        assert abs(dist["car"] - 100.0) < 1e-9
        assert abs(dist["cyclist"] - 50.0) < 1e-9
        assert abs(dist["ped"] - 18.0) < 1e-9


def run_logged_session(tmp_path, name="fig6.json", duration="3.0"):
    log = tmp_path / "run.jsonl"
    rc = main(["serve", str(scenario_path(name)), "--udp-port", "0",
               "--ws-port", "0", "--log", str(log),
               "--duration", duration, "--fast"])
    assert rc == 0
    return log


class TestServeReplayMetrics:
    def test_serve_then_replay_clean(self, tmp_path, capsys):
        log = run_logged_session(tmp_path)
        capsys.readouterr()
        assert main(["replay", str(log)]) == 0
        assert "replay ok" in capsys.readouterr().out

    def test_replay_divergence_exit_3(self, tmp_path, capsys):
        log = run_logged_session(tmp_path, "fig6.json", duration="11.0")
        text = log.read_text()
        # flip one byte inside the tick-1000 snapshot record
        m = re.search(r'"type": "snapshot", "tick": 1000, "data": "(....)',
                      text)
        assert m
        col = m.start(1)
        flipped = "A" if text[col] != "A" else "B"
        log.write_text(text[:col] + flipped + text[col + 1:])
        capsys.readouterr()
        assert main(["replay", str(log)]) == 3

    def test_replay_twice_identical(self, tmp_path, capsys):
        log = run_logged_session(tmp_path)
        capsys.readouterr()
        assert main(["--json", "replay", str(log)]) == 0
        first = capsys.readouterr().out
        assert main(["--json", "replay", str(log)]) == 0
        second = capsys.readouterr().out
        assert first == second
        assert json.loads(first)["ok"] is True

    def test_metrics_outputs(self, tmp_path, capsys):
        log = run_logged_session(tmp_path, duration="13.0")
        out_dir = tmp_path / "metrics"
        assert main(["metrics", str(log), "--out", str(out_dir)]) == 0
        for name in ("surrogate.csv", "lane.csv", "mode_stats.csv",
                     "instruments.csv", "nback.csv", "summary.json"):
            assert (out_dir / name).exists(), name
        summary = json.loads((out_dir / "summary.json").read_text())
        assert "agents" in summary

    def test_metrics_svg(self, tmp_path):
        log = run_logged_session(tmp_path, duration="13.0")
        out_dir = tmp_path / "m2"
        assert main(["metrics", str(log), "--out", str(out_dir),
                     "--svg"]) == 0
        svgs = list(out_dir.glob("*.svg"))
        assert svgs
        assert svgs[0].read_text().startswith("<svg")


class TestAlign:
    def make_streams(self, stream_dir, rate=4.0):
        stream_dir.mkdir()
        # device clock runs 25 s ahead of sim time
        t = np.arange(0, 40, 1 / rate)
        eda = 2.0 + 0.1 * np.sin(t / 9)
        write_stream_csv(str(stream_dir / "eda.csv"), SensorStream(
            "wrist_eda", Modality.EDA, rate, "wristband", t,
            eda.reshape(-1, 1)))
        # sync marks 0..3 at sim times 0, 10, 20, 30
        marks = np.array([25.0, 35.0, 45.0, 55.0]) - 20.0
        write_stream_csv(str(stream_dir / "marks.csv"), SensorStream(
            "wrist_marks", Modality.MARK, 0.1, "wristband",
            marks, np.arange(4.0).reshape(-1, 1)))

    def test_align_fits_clock_and_writes_report(self, tmp_path, capsys):
        log = run_logged_session(tmp_path, duration="31.0")
        stream_dir = tmp_path / "streams"
        self.make_streams(stream_dir)
        out_dir = tmp_path / "aligned"
        capsys.readouterr()
        rc = main(["--json", "align", "--events", str(log),
                   "--streams", str(stream_dir), "--out", str(out_dir)])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["clocks"]["wristband"]["a"] == pytest.approx(1.0)
        assert report["clocks"]["wristband"]["b"] == pytest.approx(-5.0,
                                                                   abs=1e-6)
        assert (out_dir / "alignment.json").exists()
        assert (out_dir / "wrist_eda_scr.csv").exists()


class TestHelp:
    def test_usage_error_exit_1(self):
        assert main(["no-such-command"]) == 1

    def test_help_lists_subcommands(self, capsys):
        assert main(["--help"]) in (0,)
        out = capsys.readouterr().out
        for sub in ("serve", "validate", "place", "replay", "metrics",
                    "align"):
            assert sub in out
