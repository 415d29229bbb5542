"""``floorloc`` command line: localize, track, cluster, evaluate, synth.

Every command reads one flat YAML config (``--config``) whose keys can be
overridden by the named flags or by ``--set key=value``.  Outputs go to
``out`` together with the resolved ``config.yaml``.  Errors are reported as a
single JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, load_config, parse_assignment, require
from .errors import ConfigError, FlocError, LengthMismatch, ParseError, StepError, ValidationError
from .evaluation import PosePair, Run, dump_report, report
from .filter import TrackParams, iter_track, mode_share, read_motions, write_motions
from .floorplan import DepthRayScan, Pose, gt_scan, load_floorplan, save_floorplan
from .observation import (LikelihoodParams, fuse_maps, is_unique_view, likelihood_map,
                          read_scans, write_scans)
from .posespace import PoseGridSpec, argmax_pose, save_heatmap, save_probmap
from .scenes import (SceneSpec, body_motion, random_scene_spec, random_walk, synth_floorplan,
                     two_room_scene, two_room_trajectory)

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
# below this share of the dominant mode a step is flagged as ambiguous
BIMODAL_SHARE = 0.7

FLAG_KEYS = ("floorplan", "scans", "motions", "features", "meta", "out", "seed", "threads")


# -- small IO helpers ---------------------------------------------------------

def _write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_json(path: Path, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_poses(path, poses) -> None:
    buf = io.StringIO()
    buf.write("step,x_m,y_m,theta_rad\n")
    for i, p in enumerate(poses):
        buf.write(f"{i},{p.x!r},{p.y!r},{p.theta!r}\n")
    _write_text(Path(path), buf.getvalue())


def read_poses(path) -> list[Pose]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"step", "x_m", "y_m", "theta_rad"} <= set(
                reader.fieldnames):
            raise ParseError("expected header step,x_m,y_m,theta_rad", line=1, path=path)
        for lineno, row in enumerate(reader, 2):
            try:
                rows.append((int(row["step"]), Pose(float(row["x_m"]), float(row["y_m"]),
                                                    float(row["theta_rad"]))))
            except (TypeError, ValueError) as e:
                raise ParseError(f"bad pose row: {e}", line=lineno, path=path) from None
    rows.sort(key=lambda r: r[0])
    return [p for _, p in rows]


def read_pair_probs(path) -> list[tuple[str, str, float]]:
    """CSV ``image_a,image_b,prob`` of predicted same-room probabilities."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_a", "image_b", "prob"} <= set(
                reader.fieldnames):
            raise ParseError("expected header image_a,image_b,prob", line=1, path=path)
        for lineno, row in enumerate(reader, 2):
            try:
                out.append((row["image_a"], row["image_b"], float(row["prob"])))
            except (TypeError, ValueError) as e:
                raise ParseError(f"bad pair row: {e}", line=lineno, path=path) from None
    return out


def _floorplan(cfg):
    origin = cfg["floorplan_origin"]
    return load_floorplan(cfg["floorplan"], resolution=cfg["floorplan_resolution"],
                          origin=None if origin is None else tuple(origin))


def _likelihood_params(cfg, rays_key="rays") -> LikelihoodParams:
    return LikelihoodParams(sigma=float(cfg["sigma"]), l=int(cfg[rays_key]),
                            fov=math.radians(cfg["fov_deg"]), max_range=float(cfg["max_range"]))


def _pose_spec(grid, cfg) -> PoseGridSpec:
    return PoseGridSpec.for_floorplan(grid, cfg["o_bins"], cfg["pose_cell_size"])


def _set_threads(n: int) -> None:
    import numba
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _pose_record(pose: Pose, spec: PoseGridSpec) -> dict:
    return {"x_m": pose.x, "y_m": pose.y, "theta_rad": pose.theta,
            "index": list(spec.index_of(pose))}


# -- commands -----------------------------------------------------------------

def cmd_localize(cfg: dict, out: Path) -> None:
    """Single-frame pose posterior, best pose and heatmap."""
    require(cfg, "floorplan", "scans")
    grid = _floorplan(cfg)
    scans = read_scans(cfg["scans"])
    if not cfg["frame"] < len(scans):
        raise ConfigError(f"frame {cfg['frame']} not in a file of {len(scans)} scans")
    scan = scans[cfg["frame"]]
    params = _likelihood_params(cfg)
    if cfg["multi_scans"] is None:
        spec = _pose_spec(grid, cfg)
        pmap = likelihood_map(grid, scan, spec, params)
    else:
        multi_scans = read_scans(cfg["multi_scans"])
        if not cfg["frame"] < len(multi_scans):
            raise ConfigError(f"frame {cfg['frame']} missing from multi_scans")
        f = int(cfg["fusion_factor"])
        fine = _pose_spec(grid, cfg)
        coarse = PoseGridSpec(-(-fine.h_cells // f), -(-fine.w_cells // f), fine.o_bins,
                              fine.cell_size * f, fine.origin)
        fine = PoseGridSpec(coarse.h_cells * f, coarse.w_cells * f, fine.o_bins,
                            fine.cell_size, fine.origin)
        single = likelihood_map(grid, scan, coarse, params)
        multi = likelihood_map(grid, multi_scans[cfg["frame"]], fine,
                               _likelihood_params(cfg, "multi_rays"))
        pmap = fuse_maps(single, multi, cfg["fusion_omega"], f)
        spec = fine
    pose = argmax_pose(pmap)
    save_probmap(pmap, out / "probmap.bin")
    save_heatmap(pmap, out / "heatmap.pgm")
    rec = _pose_record(pose, spec)
    rec["frame_id"] = scan.frame_id
    rec["prob"] = float(pmap.values[tuple(rec["index"])])
    _write_json(out / "pose.json", rec)


def cmd_track(cfg: dict, out: Path) -> None:
    """Histogram-filter tracking over a scan and odometry sequence."""
    require(cfg, "floorplan", "scans", "motions")
    grid = _floorplan(cfg)
    scans = read_scans(cfg["scans"])
    motions = read_motions(cfg["motions"])
    if len(motions) != len(scans) - 1:
        raise LengthMismatch(f"{len(scans)} scans need {len(scans) - 1} motions, "
                             f"got {len(motions)}")
    spec = _pose_spec(grid, cfg)
    params = TrackParams(spec, _likelihood_params(cfg), float(cfg["sigma_trans"]),
                         float(cfg["sigma_rot"]), float(cfg["floor_prob"]))
    if cfg["dump_maps"]:
        (out / "maps").mkdir(exist_ok=True)
    if cfg["heatmaps"]:
        (out / "heatmaps").mkdir(exist_ok=True)
    poses, steps = [], []
    for t, (pose, post) in enumerate(iter_track(grid, scans, motions, params)):
        poses.append(pose)
        share = mode_share(post)
        steps.append(json.dumps({"step": t, "x_m": pose.x, "y_m": pose.y,
                                 "theta_rad": pose.theta,
                                 "peak_prob": float(post.values.max()),
                                 "mode_share": share, "bimodal": share < BIMODAL_SHARE},
                                sort_keys=True))
        if cfg["dump_maps"]:
            save_probmap(post, out / "maps" / f"step_{t:04d}.bin")
        if cfg["heatmaps"]:
            save_heatmap(post, out / "heatmaps" / f"step_{t:04d}.pgm")
    write_poses(out / "trajectory.csv", poses)
    _write_text(out / "steps.jsonl", "".join(s + "\n" for s in steps))
    if cfg["gt_poses"] is not None:
        require(cfg, "gt_poses")
        truth = read_poses(cfg["gt_poses"])
        if len(truth) != len(poses):
            raise LengthMismatch(f"{len(truth)} ground-truth poses for {len(poses)} steps")
        run = _run(Path(cfg["scans"]).stem, [PosePair(p, g) for p, g in zip(poses, truth)], cfg)
        doc, table = report([run])
        _write_text(out / "report.json", dump_report(doc))
        _write_text(out / "report.txt", table)


def _run(name, pairs, cfg) -> Run:
    return Run(name, [pairs], tuple(float(t) for t in cfg["thresholds"]),
               math.radians(cfg["angle_bound_deg"]), float(cfg["success_threshold"]))


def cmd_evaluate(cfg: dict, out: Path) -> None:
    """Recall and RMSE of estimated trajectories against ground truth."""
    require(cfg, "estimates", "gt_poses")
    est = cfg["estimates"] if isinstance(cfg["estimates"], list) else [cfg["estimates"]]
    gts = cfg["gt_poses"] if isinstance(cfg["gt_poses"], list) else [cfg["gt_poses"]]
    if len(est) != len(gts):
        raise LengthMismatch(f"{len(est)} estimate files but {len(gts)} ground-truth files")
    runs = []
    for e, g in zip(est, gts):
        pe, pg = read_poses(e), read_poses(g)
        if len(pe) != len(pg):
            raise LengthMismatch(f"{e}: {len(pe)} estimates for {len(pg)} ground-truth poses")
        runs.append(_run(Path(e).stem, [PosePair(a, b) for a, b in zip(pe, pg)], cfg))
    doc, table = report(runs)
    _write_text(out / "report.json", dump_report(doc))
    _write_text(out / "report.txt", table)


def cmd_cluster(cfg: dict, out: Path) -> None:
    """Room-style pseudo-labels from image features and episode metadata."""
    from .style import StyleParams, cluster_images, mean_contrastive_loss, pair_targets
    from .style import style_pair_loss, total_loss
    from .style.io import read_features, read_metadata, write_labels

    require(cfg, "features", "meta")
    metas = read_metadata(cfg["meta"])
    feats = read_features(cfg["features"])
    params = StyleParams(lam=float(cfg["lambda"]), tau=float(cfg["tau"]),
                         gamma=float(cfg["gamma"]), knn=cfg["knn"],
                         teleport=float(cfg["teleport"]), seed=cfg["seed"],
                         blank_threshold=cfg["blank_threshold"], trials=cfg["trials"])
    model = cluster_images(metas, feats, params)
    write_labels(out / "labels.csv", model.ids, model.labels)
    loss_c = mean_contrastive_loss(model, feats)
    doc = {"n_images": len(model.ids), "k": model.k, "sizes": model.sizes(),
           "codelength_bits": model.codelength, "loss_c": loss_c}
    if cfg["pair_probs"] is not None:
        require(cfg, "pair_probs")
        index = {i: n for n, i in enumerate(model.ids)}
        rows = read_pair_probs(cfg["pair_probs"])
        unknown = [r for r in rows if r[0] not in index or r[1] not in index]
        if unknown:
            raise ValidationError(f"pair ({unknown[0][0]}, {unknown[0][1]}) names an image "
                                  "without a pseudo-label")
        pairs = [(index[a], index[b]) for a, b, _ in rows]
        loss_pred, _ = style_pair_loss([p for _, _, p in rows], pair_targets(model.labels, pairs))
        doc["loss_pred"] = loss_pred
        doc["loss_total"] = total_loss(loss_c, loss_pred, params.gamma)
    _write_json(out / "cluster_report.json", doc)


def cmd_synth(cfg: dict, out: Path) -> None:
    """Synthetic floorplan with ground-truth scans, odometry and poses."""
    seed = cfg["seed"]
    res = 0.1 if cfg["floorplan_resolution"] is None else float(cfg["floorplan_resolution"])
    scene = cfg["scene"]
    if scene == "two_rooms":
        tr = two_room_scene(res)
        spec = tr.spec
        grid = synth_floorplan(spec)
        poses = two_room_trajectory(tr)
    else:
        if scene == "random":
            rows, cols = cfg["room_grid"] if cfg["room_grid"] is not None else (None, None)
            spec = random_scene_spec(seed, rows, cols, res, tuple(cfg["room_cells"]))
        else:
            path = Path(str(scene))
            if not path.exists():
                raise ConfigError(f"scene must be two_rooms, random or a scene file; got {scene!r}")
            import yaml
            try:
                spec = SceneSpec.from_dict(yaml.safe_load(path.read_text(encoding="utf-8")))
            except yaml.YAMLError as e:
                raise ParseError(f"scene file is not valid YAML/JSON: {e}", path=path) from None
        grid = synth_floorplan(spec)
        poses = random_walk(grid, cfg["n_steps"], cfg["o_bins"], seed,
                            start=_unique_start(grid, cfg, seed))
    rng = np.random.default_rng(seed)
    l, fov, rmax = cfg["rays"], math.radians(cfg["fov_deg"]), float(cfg["max_range"])
    scans = []
    for i, p in enumerate(poses):
        s = gt_scan(grid, p, l, fov, rmax)
        if cfg["depth_noise"] > 0:
            d = np.clip(s.depths + rng.normal(0.0, cfg["depth_noise"], l), 0.0, rmax)
            s = DepthRayScan(d, fov, rmax)
        scans.append(DepthRayScan(s.depths, fov, rmax, frame_id=i))
    motions = [body_motion(a, b) for a, b in zip(poses[:-1], poses[1:])]
    if cfg["odom_noise"] > 0:
        motions = [tuple(float(v) for v in np.asarray(m) + rng.normal(0.0, cfg["odom_noise"], 3))
                   for m in motions]
    save_floorplan(grid, out / "floorplan.txt")
    write_scans(out / "scans.jsonl", scans)
    write_motions(out / "motions.jsonl", motions)
    write_poses(out / "gt_poses.csv", poses)
    _write_json(out / "scene.json", spec.to_dict())
    dataset = {"floorplan": "floorplan.txt", "scans": "scans.jsonl",
               "motions": "motions.jsonl", "gt_poses": "gt_poses.csv",
               "rays": l, "fov_deg": cfg["fov_deg"], "max_range": rmax, "o_bins": cfg["o_bins"]}
    _write_text(out / "dataset.yaml", dump_config(dataset))


def _unique_start(grid, cfg, seed, attempts=200):
    """A start pose whose view no other pose of the pose grid shares, if one is found."""
    spec = PoseGridSpec.for_floorplan(grid, cfg["o_bins"])
    params = _likelihood_params(cfg)
    ss = np.random.SeedSequence(seed)
    pose = None
    for child in ss.spawn(attempts):
        pose = random_walk(grid, 1, cfg["o_bins"], int(child.generate_state(1)[0]))[0]
        if is_unique_view(grid, pose, spec, params):
            return pose
    return pose


COMMANDS = {"localize": cmd_localize, "track": cmd_track, "cluster": cmd_cluster,
            "evaluate": cmd_evaluate, "synth": cmd_synth}


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floorloc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        sp.add_argument("--config", help="YAML key-value config file")
        for key in FLAG_KEYS:
            kind = int if key in ("seed", "threads") else str
            sp.add_argument(f"--{key}", type=kind, default=None)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (value parsed as YAML)")
    return p


def _error(exc: BaseException, code: int) -> int:
    cause = exc.cause if isinstance(exc, StepError) else exc
    rec = {"error": type(cause).__name__, "message": str(exc), "exit": code}
    if isinstance(exc, StepError):
        rec["step"] = exc.step
    sys.stderr.write(json.dumps(rec, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = dict(parse_assignment(s) for s in args.set)
        for key in FLAG_KEYS:
            v = getattr(args, key)
            if v is not None:
                overrides[key] = v
        cfg = load_config(args.config, overrides)
        _set_threads(cfg["threads"])
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write_text(out / "config.yaml", dump_config(cfg))
        COMMANDS[args.command](cfg, out)
    except StepError as e:
        return _error(e, EXIT_VALIDATION if isinstance(e.cause, ValidationError)
                      else EXIT_RUNTIME)
    except (ValidationError, OSError) as e:
        return _error(e, EXIT_VALIDATION)
    except FlocError as e:
        return _error(e, EXIT_RUNTIME)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
