import json

import numpy as np
import pytest

from voxcorr import read_mdf, read_raw_volume
from voxcorr.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def synth_args(files, out, which="a", seed=0, t=1):
    return [
        "synth",
        "--in", str(files[f"vol_{which}"]),
        "--sidecar", str(files[f"sidecar_{which}"]),
        "--scales", "1,2",
        "--channels", "8,8",
        "--t", str(t),
        "--steps", "100",
        "--seed", str(seed),
        "--out", str(out),
    ]


class TestSynthCommand:
    def test_writes_mdf_and_prints_response(self, pair_files, capsys):
        out = pair_files["dir"] / "cli_a.mdf"
        code, stdout, _ = run_cli(capsys, *synth_args(pair_files, out))
        assert code == 0
        body = json.loads(stdout)
        assert body["out"] == str(out)
        assert read_mdf(out).timestep == 1

    def test_missing_file_exits_2_with_problem_list(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            capsys,
            "synth",
            "--in", str(tmp_path / "nope.raw"),
            "--sidecar", str(tmp_path / "nope.txt"),
            "--out", str(tmp_path / "x.mdf"),
        )
        assert code == 2
        body = json.loads(stderr)
        assert body["error"] == "invalid configuration"
        assert len(body["problems"]) == 2


class TestMatchCommand:
    def test_end_to_end_match_eval(self, pair_files, capsys):
        d = pair_files["dir"]
        assert run_cli(capsys, *synth_args(pair_files, d / "ca.mdf", "a", seed=0))[0] == 0
        assert run_cli(capsys, *synth_args(pair_files, d / "cb.mdf", "b", seed=1))[0] == 0
        code, stdout, _ = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "ca.mdf"),
            "--mdf-b", str(d / "cb.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--levels", "0,1",
            "--out", str(d / "cli_match"),
        )
        assert code == 0
        match_body = json.loads(stdout)
        assert match_body["n_failed"] == 0
        code, stdout, _ = run_cli(
            capsys,
            "eval",
            "--pred", match_body["predictions"],
            "--gt", str(pair_files["gt"]),
            "--spacing", "1,1,1",
            "--out", str(d / "cli_eval"),
        )
        assert code == 0
        assert json.loads(stdout)["keypoint_mean_mm"] <= 1.0

    def test_boxed_match_with_displacement_percentile(self, pair_files, capsys):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "ba.mdf", "a", seed=0))
        run_cli(capsys, *synth_args(pair_files, d / "bb.mdf", "b", seed=1))
        disp = d / "disp.csv"
        disp.write_text("3,0,0\n3,1,0\n4,0,1\n")
        code, stdout, _ = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "ba.mdf"),
            "--mdf-b", str(d / "bb.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--box-pct", "95", "--disp", str(disp),
            "--out", str(d / "cli_boxed"),
        )
        assert code == 0
        report = json.loads((d / "cli_boxed" / "report.json").read_text())
        assert report["config"]["box"]["resolved_half_widths"] == [4, 1, 1]
        assert report["config"]["box"]["percentile_units"] == "voxels"

    def test_box_flag_conflicts_exit_2(self, pair_files, capsys):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "xa.mdf", "a"))
        code, _, stderr = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "xa.mdf"),
            "--mdf-b", str(d / "xa.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--box", "1,1,1", "--box-pct", "95", "--disp", str(pair_files["queries"]),
            "--out", str(d / "never"),
        )
        assert code == 2
        assert "not both" in json.loads(stderr)["problems"][0]


class TestEvalCommand:
    def test_cases_manifest_worked_example(self, tmp_path, capsys):
        (tmp_path / "p0.csv").write_text("0,0,0\n1,0,0\n")
        (tmp_path / "g0.csv").write_text("0,0,0\n1,0,0\n")
        (tmp_path / "p1.csv").write_text("6,0,0\n")
        (tmp_path / "g1.csv").write_text("0,0,0\n")
        manifest = tmp_path / "cases.csv"
        manifest.write_text(
            f"c0,{tmp_path}/p0.csv,{tmp_path}/g0.csv,1,1,1\n"
            f"c1,{tmp_path}/p1.csv,{tmp_path}/g1.csv,1,1,1\n"
        )
        code, stdout, _ = run_cli(
            capsys, "eval", "--cases", str(manifest), "--out", str(tmp_path / "out")
        )
        assert code == 0
        body = json.loads(stdout)
        assert body["case_mean_mm"] == 3.0
        assert body["keypoint_mean_mm"] == 2.0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["case_mean_mm"] == 3.0

    def test_pred_and_cases_conflict(self, tmp_path, capsys):
        code, _, stderr = run_cli(
            capsys,
            "eval",
            "--pred", "x.csv", "--gt", "y.csv", "--cases", "m.csv",
            "--out", str(tmp_path / "out"),
        )
        assert code == 2
        assert "not both" in json.loads(stderr)["problems"][0]


class TestSweepCommand:
    def test_heatmap_csv_shape(self, pair_files, capsys):
        d = pair_files["dir"]
        code, stdout, _ = run_cli(
            capsys,
            "sweep",
            "--vol-a", str(pair_files["vol_a"]),
            "--sidecar-a", str(pair_files["sidecar_a"]),
            "--vol-b", str(pair_files["vol_b"]),
            "--sidecar-b", str(pair_files["sidecar_b"]),
            "--queries", str(pair_files["queries"]),
            "--gt", str(pair_files["gt"]),
            "--t-values", "1,50,99",
            "--level-sets", "0:01:012:0123",
            "--scales", "4,3,2,2",
            "--channels", "6,6,6,6",
            "--steps", "100",
            "--out", str(d / "cli_sweep"),
        )
        assert code == 0
        lines = (d / "cli_sweep" / "heatmap.csv").read_text().strip().split("\n")
        assert lines[0] == "levels,t=1,t=50,t=99"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "01", "012", "0123"]
        assert all(len(ln.split(",")) == 4 for ln in lines[1:])


class TestSimmapCommand:
    def test_map_output(self, pair_files, capsys):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "sa.mdf", "a"))
        code, stdout, _ = run_cli(
            capsys,
            "simmap",
            "--mdf-a", str(d / "sa.mdf"),
            "--mdf-b", str(d / "sa.mdf"),
            "--query", "5,6,7",
            "--out", str(d / "cli_simmap"),
        )
        assert code == 0
        body = json.loads(stdout)
        assert tuple(body["best_match"]) == (5, 6, 7)
        vol = read_raw_volume(d / "cli_simmap" / "simmap.raw", d / "cli_simmap" / "simmap.txt")
        assert vol.dims == (20, 18, 16)


class TestNoiseCommand:
    def test_noise_round_trip(self, pair_files, capsys):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "na.mdf", "a"))
        code, stdout, _ = run_cli(
            capsys,
            "noise",
            "--in", str(d / "na.mdf"),
            "--t", "50",
            "--steps", "100",
            "--seed", "5",
            "--out", str(d / "noised.mdf"),
        )
        assert code == 0
        fs = read_mdf(d / "noised.mdf")
        assert fs.timestep == 50

    def test_malformed_container_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.mdf"
        bad.write_bytes(b"JUNKJUNKJUNK")
        code, _, stderr = run_cli(
            capsys,
            "noise", "--in", str(bad), "--t", "1", "--out", str(tmp_path / "o.mdf"),
        )
        assert code == 1
        assert "magic" in json.loads(stderr)["error"]


class TestSelfMatchPipeline:
    def test_identical_mdf_predictions_equal_queries(self, pair_files, capsys):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "self.mdf", "a"))
        code, stdout, _ = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "self.mdf"),
            "--mdf-b", str(d / "self.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--out", str(d / "self_match"),
        )
        assert code == 0
        preds = (d / "self_match" / "predictions.csv").read_text().strip().split("\n")
        queries = (d / "queries.csv").read_text().strip().split("\n")
        assert [tuple(map(float, ln.split(","))) for ln in preds] == [
            tuple(map(float, ln.split(","))) for ln in queries
        ]
        code, stdout, _ = run_cli(
            capsys,
            "eval",
            "--pred", str(d / "self_match" / "predictions.csv"),
            "--gt", str(d / "queries.csv"),
            "--out", str(d / "self_eval"),
        )
        assert code == 0
        body = json.loads(stdout)
        assert body["keypoint_mean_mm"] == 0.0 and body["case_mean_mm"] == 0.0


class TestThreadsEnvFallback:
    def test_env_var_used_when_flag_absent(self, pair_files, capsys, monkeypatch):
        d = pair_files["dir"]
        run_cli(capsys, *synth_args(pair_files, d / "ta.mdf", "a"))
        monkeypatch.setenv("VOXCORR_THREADS", "3")
        code, _, _ = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "ta.mdf"),
            "--mdf-b", str(d / "ta.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--out", str(d / "env_match"),
        )
        assert code == 0
        monkeypatch.setenv("VOXCORR_THREADS", "not-a-number")
        code, _, stderr = run_cli(
            capsys,
            "match",
            "--mdf-a", str(d / "ta.mdf"),
            "--mdf-b", str(d / "ta.mdf"),
            "--keypoints", str(pair_files["queries"]),
            "--out", str(d / "env_match2"),
        )
        assert code == 2
        assert "VOXCORR_THREADS" in json.loads(stderr)["problems"][0]
