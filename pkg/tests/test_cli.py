"""End-to-end CLI runs on a tiny scene: artifacts, reports, exit codes."""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from reprojkit import cli
from reprojkit.config import canonical_json, load_scene, scene_to_dict
from reprojkit.geometry import CameraIntrinsics
from reprojkit.scene import Plane, SceneSpec, Sphere
from reprojkit.textures import CheckerTexture, NoiseTexture


@pytest.fixture()
def runner():
    return CliRunner()


def small_scene_file(tmp_path, plane_only=False):
    cam = CameraIntrinsics(fx=64.0, fy=64.0, cx=31.5, cy=31.5,
                           width=64, height=64)
    ground = Plane(origin=(0.0, 0.0, 0.0), normal=(0.0, 0.0, 1.0),
                   half_u=6.0, half_v=6.0, texture=0)
    if plane_only:
        prims = (ground,)
    else:
        prims = (ground, Sphere(center=(0.2, 0.0, 0.25), radius=0.25, texture=1))
    spec = SceneSpec(primitives=prims,
                     textures=(NoiseTexture(scale=0.2, seed=5),
                               CheckerTexture(scale=0.12)))
    path = tmp_path / "scene.json"
    path.write_text(canonical_json(scene_to_dict(spec, cam)))
    return path


def small_config_file(tmp_path, out_dir, plane_only=False, **extra):
    scene = small_scene_file(tmp_path, plane_only=plane_only)
    data = {"scene": scene.name,
            "trajectory": {"kind": "line", "frames": 14, "radius": 2.0,
                           "height": 1.2},
            "sampling": {"min_offset": 2, "max_offset": 5},
            "adaptation": {"window_len": 4, "n_sampled": 2},
            "eval": {"pair_min_offset": 1, "pair_max_offset": 3,
                     "detect_k": 128, "ransac_iterations": 200},
            "n_pairs": 3,
            "seed": 5,
            "output_dir": str(out_dir)}
    data.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def read_report(out_dir):
    return json.loads((out_dir / "report.json").read_text())


class TestSynth:
    def test_writes_dataset_and_report(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        res = runner.invoke(cli.main, ["synth", "-c", str(cfg)])
        assert res.exit_code == 0, res.output
        assert "14 frames" in res.output and "seed 5" in res.output
        assert (out / "manifest.json").is_file()
        assert len(list((out / "frames").glob("*.ppm"))) == 14
        assert len(list((out / "frames").glob("*.pfm"))) == 14
        rep = read_report(out)
        assert rep["command"] == "synth"
        assert rep["results"]["frames"] == 14
        assert rep["config"]["seed"] == 5

    def test_rerun_and_threads_identical(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        before = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        res = runner.invoke(cli.main, ["synth", "-c", str(cfg), "--threads", "4"])
        assert res.exit_code == 0
        after = {p: p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        assert before == after

    def test_seed_override_lands_in_report(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        res = runner.invoke(cli.main, ["synth", "-c", str(cfg), "--seed", "99"])
        assert res.exit_code == 0
        assert read_report(out)["config"]["seed"] == 99

    def test_bad_config_exits_1(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{broken")
        res = runner.invoke(cli.main, ["synth", "-c", str(cfg)])
        assert res.exit_code == 1
        assert "config error" in res.output

    def test_missing_scene_exits_1(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"scene": "gone.json"}))
        res = runner.invoke(cli.main, ["synth", "-c", str(cfg)])
        assert res.exit_code == 1


class TestPairs:
    def test_offsets_respect_bounds(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out, n_pairs=6)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = runner.invoke(cli.main, ["pairs", "-c", str(cfg)])
        assert res.exit_code == 0, res.output
        listing = (out / "pairs" / "list.txt").read_text().splitlines()
        assert len(listing) == 6
        for line in listing:
            i, j = map(int, line.split())
            assert 2 <= j - i <= 5
        assert len(list((out / "pairs").glob("pair_*.txt"))) >= 1
        rep = read_report(out)
        assert rep["results"]["min_offset"] >= 2
        assert rep["results"]["max_offset"] <= 5

    def test_equal_bounds_pin_offset(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out,
                                sampling={"min_offset": 3, "max_offset": 3})
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        assert runner.invoke(cli.main, ["pairs", "-c", str(cfg)]).exit_code == 0
        for line in (out / "pairs" / "list.txt").read_text().splitlines():
            i, j = map(int, line.split())
            assert j - i == 3

    def test_missing_dataset_exits_2(self, runner, tmp_path):
        cfg = small_config_file(tmp_path, tmp_path / "nowhere")
        res = runner.invoke(cli.main, ["pairs", "-c", str(cfg)])
        assert res.exit_code == 2
        assert "data error" in res.output

    def test_unsatisfiable_offsets_exit_2(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out,
                                sampling={"min_offset": 50, "max_offset": 60})
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = runner.invoke(cli.main, ["pairs", "-c", str(cfg)])
        assert res.exit_code == 2


class TestLabels:
    def test_writes_labels(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = runner.invoke(cli.main, ["labels", "-c", str(cfg)])
        assert res.exit_code == 0, res.output
        text = (out / "labels.txt").read_text()
        assert len(text.splitlines()) > 1
        rep = read_report(out)
        assert rep["results"]["frames"] == 14 - 4 + 1
        assert rep["results"]["points"] > 0

    def test_deterministic(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        assert runner.invoke(cli.main, ["labels", "-c", str(cfg)]).exit_code == 0
        first = (out / "labels.txt").read_bytes()
        assert runner.invoke(cli.main, ["labels", "-c", str(cfg)]).exit_code == 0
        assert (out / "labels.txt").read_bytes() == first


class TestEval:
    def run_eval(self, runner, cfg, task, threads=1):
        return runner.invoke(cli.main, ["eval", "--task", task, "-c", str(cfg),
                                        "--threads", str(threads)])

    def test_homography_report_fields(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out, plane_only=True)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = self.run_eval(runner, cfg, "homography")
        assert res.exit_code == 0, res.output
        r = read_report(out)["results"]
        for key in ("acc@3", "acc@5", "auc@3", "auc@5", "repeatability",
                    "mma", "matching_score", "pairs", "failed"):
            assert key in r

    def test_homography_needs_plane_scene(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out, plane_only=False)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = self.run_eval(runner, cfg, "homography")
        assert res.exit_code == 1
        assert "plane-only" in res.output

    def test_pose_report_fields(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = self.run_eval(runner, cfg, "pose")
        assert res.exit_code == 0, res.output
        r = read_report(out)["results"]
        for key in ("auc@5", "auc@10", "auc@20", "low_translation", "general",
                    "split"):
            assert key in r
        assert r["low_translation"]["count"] + r["general"]["count"] == r["pairs"]

    def test_register_report_fields(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        res = self.run_eval(runner, cfg, "register")
        assert res.exit_code == 0, res.output
        r = read_report(out)["results"]
        for family in ("rotation", "translation", "chamfer"):
            assert "mean" in r[family] and "median" in r[family]
            assert any(k.startswith("acc@") for k in r[family])

    def test_reports_identical_across_threads(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        assert self.run_eval(runner, cfg, "pose", threads=1).exit_code == 0
        j1 = (out / "report.json").read_bytes()
        c1 = (out / "report.csv").read_bytes()
        assert self.run_eval(runner, cfg, "pose", threads=4).exit_code == 0
        assert (out / "report.json").read_bytes() == j1
        assert (out / "report.csv").read_bytes() == c1

    def test_csv_mirrors_json(self, runner, tmp_path):
        out = tmp_path / "run"
        cfg = small_config_file(tmp_path, out)
        assert runner.invoke(cli.main, ["synth", "-c", str(cfg)]).exit_code == 0
        assert self.run_eval(runner, cfg, "register").exit_code == 0
        lines = (out / "report.csv").read_text().splitlines()
        assert lines[0] == "key,value"
        keys = [ln.split(",", 1)[0] for ln in lines[1:]]
        assert keys == sorted(keys)
        assert "command" in keys
        assert "config.seed" in keys
        assert any(k.startswith("results.rotation") for k in keys)


class TestLosscheck:
    def test_passes_and_reports(self, runner, tmp_path):
        out = tmp_path / "lc"
        res = runner.invoke(cli.main, ["losscheck", "--out", str(out),
                                       "--instances", "3", "--seed", "2"])
        assert res.exit_code == 0, res.output
        r = read_report(out)["results"]
        assert r["descriptor_max_rel_error"] < 1e-3
        assert r["detector_max_rel_error"] < 1e-3
        assert r["passed"] is True

    def test_deterministic(self, runner, tmp_path):
        out = tmp_path / "lc"
        args = ["losscheck", "--out", str(out), "--instances", "3", "--seed", "2"]
        assert runner.invoke(cli.main, args).exit_code == 0
        first = (out / "report.json").read_bytes()
        assert runner.invoke(cli.main, args + ["--threads", "4"]).exit_code == 0
        assert (out / "report.json").read_bytes() == first

    def test_failure_exits_3(self, runner, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "_descriptor_fd_error", lambda rng: 0.5)
        out = tmp_path / "lc"
        res = runner.invoke(cli.main, ["losscheck", "--out", str(out),
                                       "--instances", "1"])
        assert res.exit_code == 3
        assert read_report(out)["results"]["passed"] is False


def test_builtin_scene_configs_pass_validation():
    for tag in ("builtin:plane", "builtin:general", None):
        spec, cam = load_scene(tag)
        assert cam.width == cam.height == 160
