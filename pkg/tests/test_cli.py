import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import unique_view_pose
from floorloc.cli import main, read_poses, write_poses
from floorloc.config import DEFAULTS, load_config
from floorloc.errors import ConfigError
from floorloc.filter import write_motions
from floorloc.floorplan import Pose, gt_scan, load_floorplan, save_floorplan
from floorloc.observation import GIBSON_FOV, read_scans, write_scans
from floorloc.posespace import load_probmap
from floorloc.scenes import (body_motion, random_scene_spec, random_walk, synth_floorplan,
                             two_room_scene)
from floorloc.style import EpisodeMeta, FeatureRecord
from floorloc.style.io import read_labels, write_features, write_metadata


def run(capsys, *args):
    code = main([str(a) for a in args])
    err = capsys.readouterr().err
    return code, err


def tree(d: Path) -> dict:
    return {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture
def unique_scene(tmp_path):
    g = synth_floorplan(random_scene_spec(2))
    p = unique_view_pose(g, 2)
    save_floorplan(g, tmp_path / "fp.txt")
    write_scans(tmp_path / "scan.jsonl", [gt_scan(g, p, 40, GIBSON_FOV)])
    return g, p, tmp_path


# -- config ---------------------------------------------------------------------------------

def test_config_defaults_and_overrides(tmp_path):
    (tmp_path / "c.yaml").write_text("sigma: 0.2\nscans: s.jsonl\n")
    cfg = load_config(tmp_path / "c.yaml", {"rays": 160})
    assert cfg["sigma"] == 0.2 and cfg["rays"] == 160 and cfg["gamma"] == 1.0
    assert cfg["scans"] == str(tmp_path / "s.jsonl")
    assert DEFAULTS["fov_deg"] == 108.0 and DEFAULTS["rays"] == 40


@pytest.mark.parametrize("text", ["bogus: 1\n", "sigma: -1\n", "teleport: 1.0\n",
                                  "o_bins: 2.5\n", "thresholds: []\n", "[1, 2]\n"])
def test_config_rejects(tmp_path, text):
    (tmp_path / "c.yaml").write_text(text)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.yaml")


def test_missing_input_file(tmp_path, capsys):
    code, err = run(capsys, "localize", "--floorplan", tmp_path / "nope.txt", "--scans",
                    tmp_path / "nope.jsonl", "--out", tmp_path / "o")
    assert code == 2
    rec = json.loads(err.strip())
    assert rec["error"] == "ConfigError" and rec["exit"] == 2


# -- localize ------------------------------------------------------------------------------------

def test_localize(unique_scene, capsys):
    g, p, d = unique_scene
    code, _ = run(capsys, "localize", "--floorplan", d / "fp.txt", "--scans", d / "scan.jsonl",
                  "--out", d / "out")
    assert code == 0
    rec = json.loads((d / "out" / "pose.json").read_text())
    assert abs(rec["x_m"] - p.x) <= g.resolution / 2 and abs(rec["y_m"] - p.y) <= g.resolution / 2
    pm = load_probmap(d / "out" / "probmap.bin")
    assert abs(pm.total() - 1) < 1e-9
    assert (d / "out" / "heatmap.pgm").read_bytes().startswith(b"P5")
    cfg = yaml.safe_load((d / "out" / "config.yaml").read_text())
    assert cfg["rays"] == 40 and cfg["floorplan"] == str(d / "fp.txt")


def test_localize_wrong_length(unique_scene, capsys):
    _, _, d = unique_scene
    code, err = run(capsys, "localize", "--floorplan", d / "fp.txt", "--scans", d / "scan.jsonl",
                    "--out", d / "out", "--set", "rays=20")
    assert code == 2
    lines = err.strip().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["error"] == "LengthMismatch"


def test_localize_deterministic(unique_scene, capsys):
    _, _, d = unique_scene
    for o in ("a", "b"):
        assert run(capsys, "localize", "--floorplan", d / "fp.txt", "--scans", d / "scan.jsonl",
                   "--out", d / o)[0] == 0
    a, b = tree(d / "a"), tree(d / "b")
    a.pop("config.yaml"), b.pop("config.yaml")
    assert a == b


def test_localize_with_fusion(unique_scene, capsys):
    g, p, d = unique_scene
    write_scans(d / "multi.jsonl", [gt_scan(g, p, 160, GIBSON_FOV)])
    code, _ = run(capsys, "localize", "--floorplan", d / "fp.txt", "--scans", d / "scan.jsonl",
                  "--out", d / "out", "--set", f"multi_scans={d / 'multi.jsonl'}",
                  "--set", "fusion_omega=0.5", "--set", "fusion_factor=2",
                  "--set", "pose_cell_size=0.05")
    assert code == 0
    rec = json.loads((d / "out" / "pose.json").read_text())
    assert math.hypot(rec["x_m"] - p.x, rec["y_m"] - p.y) <= 0.1


# -- track -------------------------------------------------------------------------------------

def _track_dataset(d: Path, g, poses):
    save_floorplan(g, d / "fp.txt")
    write_scans(d / "scans.jsonl", [gt_scan(g, p, 40, GIBSON_FOV) for p in poses])
    write_motions(d / "motions.jsonl", [body_motion(a, b) for a, b in zip(poses[:-1], poses[1:])])
    write_poses(d / "gt.csv", poses)


def test_track_noiseless_unique(tmp_path, capsys):
    g = synth_floorplan(random_scene_spec(6))
    poses = random_walk(g, 10, 16, 1, start=unique_view_pose(g, 6))
    _track_dataset(tmp_path, g, poses)
    code, _ = run(capsys, "track", "--floorplan", tmp_path / "fp.txt", "--scans",
                  tmp_path / "scans.jsonl", "--motions", tmp_path / "motions.jsonl",
                  "--out", tmp_path / "out", "--set", f"gt_poses={tmp_path / 'gt.csv'}",
                  "--set", "heatmaps=true", "--set", "dump_maps=true")
    assert code == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["aggregate"]["r_at"]["0.1"] == 100.0
    assert read_poses(tmp_path / "out" / "trajectory.csv") == poses
    assert len(list((tmp_path / "out" / "maps").iterdir())) == 10
    assert len(list((tmp_path / "out" / "heatmaps").iterdir())) == 10


def test_track_flags_two_room_ambiguity(tmp_path, capsys):
    from floorloc.scenes import two_room_trajectory
    sc = two_room_scene()
    g = synth_floorplan(sc.spec)
    poses = two_room_trajectory(sc)
    _track_dataset(tmp_path, g, poses)
    code, _ = run(capsys, "track", "--floorplan", tmp_path / "fp.txt", "--scans",
                  tmp_path / "scans.jsonl", "--motions", tmp_path / "motions.jsonl",
                  "--out", tmp_path / "out")
    assert code == 0
    steps = [json.loads(s) for s in (tmp_path / "out" / "steps.jsonl").read_text().splitlines()]
    assert all("mode_share" in s for s in steps)
    assert steps[0]["bimodal"] and not steps[-1]["bimodal"]


def test_track_empty_motions(tmp_path, capsys):
    g = synth_floorplan(random_scene_spec(1))
    poses = random_walk(g, 2, 16, 0)
    _track_dataset(tmp_path, g, poses)
    (tmp_path / "motions.jsonl").write_text("")
    code, err = run(capsys, "track", "--floorplan", tmp_path / "fp.txt", "--scans",
                    tmp_path / "scans.jsonl", "--motions", tmp_path / "motions.jsonl",
                    "--out", tmp_path / "out")
    assert code == 2 and json.loads(err)["error"] == "LengthMismatch"


# -- evaluate ----------------------------------------------------------------------------------

def test_evaluate(tmp_path, capsys):
    truth = [Pose(0, 0, 0), Pose(1, 0, 0), Pose(2, 0, 0)]
    est = [Pose(0.05, 0, 0), Pose(1.3, 0, 0), Pose(2, 0.8, 1.0)]
    write_poses(tmp_path / "e.csv", est)
    write_poses(tmp_path / "g.csv", truth)
    code, _ = run(capsys, "evaluate", "--out", tmp_path / "o", "--set",
                  f"estimates={tmp_path / 'e.csv'}", "--set", f"gt_poses={tmp_path / 'g.csv'}")
    assert code == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["aggregate"]["r_at"] == {"0.1": pytest.approx(100 / 3), "0.5": pytest.approx(200 / 3),
                                        "1": 100.0}
    assert rep["aggregate"]["r_1m_30"] == pytest.approx(200 / 3)
    assert "R@0.1 m" in (tmp_path / "o" / "report.txt").read_text()


def test_evaluate_inconsistent_lengths(tmp_path, capsys):
    write_poses(tmp_path / "e.csv", [Pose(0, 0, 0)])
    write_poses(tmp_path / "g.csv", [Pose(0, 0, 0)] * 2)
    code, _ = run(capsys, "evaluate", "--out", tmp_path / "o", "--set",
                  f"estimates={tmp_path / 'e.csv'}", "--set", f"gt_poses={tmp_path / 'g.csv'}")
    assert code == 2


# -- cluster -------------------------------------------------------------------------------------

def _style_data(d: Path, n_a=6, n_b=3):
    rng = np.random.default_rng(0)
    metas, feats = [], []
    for i in range(n_a):
        scene, pos = ("s1", "p1") if i < n_a // 2 else ("s2", "p2")
        metas.append(EpisodeMeta(f"a{i}", scene, f"ea{i}", "medium", pos, 4))
        feats.append(FeatureRecord(f"a{i}", [1, 1e-3 * rng.normal(), 0, 0]))
    for i in range(n_b):
        metas.append(EpisodeMeta(f"b{i}", "s1", f"eb{i}", "medium", "p3", 4))
        feats.append(FeatureRecord(f"b{i}", [0, 0, 1, 1e-3 * rng.normal()]))
    write_metadata(d / "meta.jsonl", metas)
    write_features(d / "feats.txt", feats)


def _cluster(capsys, d, *extra):
    return run(capsys, "cluster", "--features", d / "feats.txt", "--meta", d / "meta.jsonl",
               "--out", d / "o", *extra)


def test_cluster_two_bundles(tmp_path, capsys):
    _style_data(tmp_path)
    assert _cluster(capsys, tmp_path, "--set", "lambda=0")[0] == 0
    rep = json.loads((tmp_path / "o" / "cluster_report.json").read_text())
    assert rep["k"] == 2 and sorted(rep["sizes"]) == [3, 6]
    labels = read_labels(tmp_path / "o" / "labels.csv")
    assert len({labels[f"a{i}"] for i in range(6)}) == 1


def test_cluster_constraints_split(tmp_path, capsys):
    _style_data(tmp_path)
    assert _cluster(capsys, tmp_path, "--set", "lambda=0.5", "--set", "knn=3")[0] == 0
    assert json.loads((tmp_path / "o" / "cluster_report.json").read_text())["k"] >= 3


def test_cluster_single_image_and_pair_losses(tmp_path, capsys):
    write_metadata(tmp_path / "meta.jsonl", [EpisodeMeta("x", "s", "e", "easy", "p", 1)])
    write_features(tmp_path / "feats.txt", [FeatureRecord("x", [0.0, 2.0])])
    (tmp_path / "pairs.csv").write_text("image_a,image_b,prob\nx,x,0.5\n")
    code, _ = _cluster(capsys, tmp_path, "--set", f"pair_probs={tmp_path / 'pairs.csv'}")
    assert code == 0
    rep = json.loads((tmp_path / "o" / "cluster_report.json").read_text())
    assert rep["k"] == 1 and rep["loss_c"] == 0.0
    assert rep["loss_pred"] == pytest.approx(math.log(2))
    assert rep["loss_total"] == pytest.approx(math.log(2))


# -- synth --------------------------------------------------------------------------------------

def test_synth_then_track(tmp_path, capsys):
    assert run(capsys, "synth", "--out", tmp_path / "ds", "--seed", 8,
               "--set", "n_steps=12")[0] == 0
    ds = tmp_path / "ds"
    assert {p.name for p in ds.iterdir()} >= {"floorplan.txt", "scans.jsonl", "motions.jsonl",
                                              "gt_poses.csv", "scene.json", "config.yaml"}
    assert run(capsys, "track", "--config", ds / "dataset.yaml", "--out", tmp_path / "tr")[0] == 0
    rep = json.loads((tmp_path / "tr" / "report.json").read_text())
    assert rep["aggregate"]["r_at"]["0.1"] == 100.0


def test_synth_two_rooms_mirrored_scans(tmp_path, capsys):
    assert run(capsys, "synth", "--out", tmp_path, "--set", "scene=two_rooms")[0] == 0
    sc = two_room_scene()
    g = load_floorplan(tmp_path / "floorplan.txt")
    scans = read_scans(tmp_path / "scans.jsonl")
    poses = read_poses(tmp_path / "gt_poses.csv")
    shift = sc.right_room.x - sc.left_room.x
    for p, s in zip(poses[:4], scans[:4]):
        twin = gt_scan(g, Pose(p.x + shift, p.y, p.theta), s.l, s.fov, s.max_range)
        np.testing.assert_allclose(twin.depths, s.depths, rtol=0, atol=1e-12)


def test_synth_deterministic_with_noise(tmp_path, capsys):
    for o in ("a", "b"):
        assert run(capsys, "synth", "--out", tmp_path / o, "--seed", 4, "--set", "n_steps=5",
                   "--set", "depth_noise=0.05", "--set", "odom_noise=0.01")[0] == 0
    a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
    a.pop("config.yaml"), b.pop("config.yaml")
    assert a == b


def test_synth_bad_scene(tmp_path, capsys):
    (tmp_path / "scene.yaml").write_text("rooms: [[0, 0, 0.1, 0.1]]\n")
    code, err = run(capsys, "synth", "--out", tmp_path / "o", "--set",
                    f"scene={tmp_path / 'scene.yaml'}")
    assert code == 2 and json.loads(err)["error"] == "InvalidSpec"


# -- threads ---------------------------------------------------------------------------------------

def test_multithreaded_matches_single(tmp_path, capsys):
    assert run(capsys, "synth", "--out", tmp_path / "ds", "--seed", 2, "--set", "n_steps=6")[0] == 0
    outs = []
    for threads in (1, 4):
        env = dict(os.environ, NUMBA_NUM_THREADS="4")
        out = tmp_path / f"t{threads}"
        subprocess.run([sys.executable, "-m", "floorloc.cli", "track", "--config",
                        str(tmp_path / "ds" / "dataset.yaml"), "--out", str(out),
                        "--threads", str(threads), "--set", "dump_maps=true"],
                       check=True, env=env)
        t = tree(out)
        t.pop("config.yaml")
        outs.append(t)
    assert outs[0] == outs[1]
