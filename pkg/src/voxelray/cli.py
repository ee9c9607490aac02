"""``voxelray`` command line.

Subcommands: encode, project, occupancy, attention-demo, augment, eval,
selfcheck.  Failures exit nonzero with one line on stderr of the form
``error: <Kind>: <message>``.  ``VOXELRAY_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _kernels
from .attention import local_ray_attention, make_orientation_aware_values, write_voxel_features
from .config import RunConfig, load_config
from .encoding import encode
from .evaluation import Detection, EvalConfig, GroundTruth, ap_r40
from .geometry import PointCloud, apply_world_flip, apply_world_rotation, ego_to_camera, mirror_intrinsic, \
    orientation_delta, project_to_image
from .kitti_io import (box_to_label, calibration_from_rig, format_calibration, format_labels, label_to_box,
                       label_to_eval_box, parse_calibration, parse_labels, read_point_cloud, rig_from_calibration,
                       write_point_cloud)
from .occupancy import label_occupancy, label_occupancy_naive, write_occupancy
from .voxelgrid import read_feature_map, voxel_centers

logger = logging.getLogger("voxelray")


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg.validate()


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="")


def _rig(cfg: RunConfig, calib_path: str):
    calib = parse_calibration(Path(calib_path).read_text())
    return calib, rig_from_calibration(calib, cfg.camera, image_size=(cfg.image_height, cfg.image_width))


def cmd_encode(args, cfg):
    encoder = cfg.query_encoder() if args.encoder == "query" else cfg.orientation_encoder()
    if args.values:
        vals = [float(v) for v in args.values.split(",")]
    else:
        vals = list(np.linspace(encoder.x_first, encoder.x_last, 10))
    codes = encode(encoder, vals)
    fh = _open_out(args.output)
    w = csv.writer(fh, lineterminator="\n")
    if args.similarity:
        w.writerow(["position"] + [repr(v) for v in vals])
        sims = codes @ codes.T
        for v, row in zip(vals, sims):
            w.writerow([repr(v)] + [repr(float(x)) for x in row])
    else:
        w.writerow([f"e{i}" for i in range(encoder.n)])
        for row in codes:
            w.writerow([repr(float(x)) for x in row])
    if fh is not sys.stdout:
        fh.close()


def cmd_project(args, cfg):
    _, rig = _rig(cfg, args.calib)
    grid = cfg.grid()
    uv, depth, valid = project_to_image(rig, ego_to_camera(rig, voxel_centers(grid)))
    fh = _open_out(args.output)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["voxel_index", "u", "v", "z_c", "valid"])
    for i in range(len(depth)):
        u, v = (repr(float(x)) for x in uv[i]) if valid[i] else ("", "")
        w.writerow([i, u, v, repr(float(depth[i])), int(valid[i])])
    if fh is not sys.stdout:
        fh.close()


def cmd_occupancy(args, cfg):
    cloud = read_point_cloud(Path(args.cloud).read_bytes())
    grid = cfg.grid()
    sensor = (0.0, 0.0, cfg.sensor_height)
    if args.naive:
        occ = label_occupancy_naive(grid, cloud)
    else:
        occ = label_occupancy(grid, cloud, sensor, threads=cfg.threads)
    out = args.output or "occupancy.occ"
    write_occupancy(out, occ)
    counts = occ.counts()
    print("label,count")
    for k in ("occupied", "free", "unknown"):
        print(f"{k},{counts[k]}")


def cmd_attention(args, cfg):
    keys = read_feature_map(args.keys)
    values = read_feature_map(args.values)
    _, rig = _rig(cfg, args.calib)
    h, w = keys.shape[:2]
    rig = rig.rescaled(w / cfg.image_width, h / cfg.image_height)
    if args.orientation_aware:
        values = make_orientation_aware_values(values, orientation_delta(rig), cfg.orientation_encoder())
    feats = local_ray_attention(keys, values, cfg.grid(), rig, cfg.query_encoder(),
                                normalize=None if cfg.normalize == "none" else cfg.normalize, threads=cfg.threads)
    out = args.output or "voxels.vxf"
    write_voxel_features(out, feats)
    wpath = args.weights or str(out) + ".weights.csv"
    with open(wpath, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["voxel_index", "weight", "valid"])
        for i in np.flatnonzero(feats.valid):
            wr.writerow([int(i), repr(float(feats.weights[i])), 1])
    print(f"voxels={feats.values.shape[0]} valid={int(feats.valid.sum())} channels={feats.channels} backend={_kernels.BACKEND}")


def cmd_augment(args, cfg):
    outdir = Path(args.output or "augmented")
    outdir.mkdir(parents=True, exist_ok=True)
    if args.theta is not None:
        theta = args.theta
    else:
        theta = float(np.random.default_rng(cfg.seed).uniform(*cfg.rotation_range))
    flip = cfg.flip if args.flip is None else args.flip
    label_text = Path(args.label).read_text()
    calib, rig = _rig(cfg, args.calib)
    before = orientation_delta(rig)
    if theta == 0.0 and not flip:
        # identity augmentation: copy inputs verbatim
        shutil.copyfile(args.calib, outdir / "calib.txt")
        shutil.copyfile(args.label, outdir / "label.txt")
        if args.cloud:
            shutil.copyfile(args.cloud, outdir / "cloud.bin")
        print(f"theta=0.0 flip=false delta_before={before!r} delta_after={before!r}")
        return
    labels = parse_labels(label_text)
    scored = [lb for lb in labels if lb.type != "DontCare"]
    boxes = [label_to_box(lb, rig) for lb in scored]
    cloud = read_point_cloud(Path(args.cloud).read_bytes()) if args.cloud else PointCloud(np.zeros((0, 3)))
    new_rig, boxes, cloud = apply_world_rotation(rig, boxes, cloud, theta)
    if flip:
        new_rig, boxes, cloud, _ = apply_world_flip(new_rig, boxes, cloud)
        new_rig = mirror_intrinsic(new_rig)
    after = orientation_delta(new_rig)
    width = cfg.image_width
    new_labels = []
    for lb, box in zip(scored, boxes):
        nl = box_to_label(box, new_rig, template=lb)
        if flip:
            x1, y1, x2, y2 = lb.bbox
            nl = replace(nl, bbox=(width - 1 - x2, y1, width - 1 - x1, y2))
        new_labels.append(nl)
    (outdir / "label.txt").write_text(format_labels(new_labels))
    (outdir / "calib.txt").write_text(format_calibration(calibration_from_rig(calib, new_rig, cfg.camera)))
    with open(outdir / "boxes_ego.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["type", "x", "y", "z", "length", "width", "height", "yaw"])
        for lb, b in zip(scored, boxes):
            wr.writerow([lb.type] + [repr(float(v)) for v in (b.x, b.y, b.z, b.length, b.width, b.height, b.yaw)])
    if args.cloud:
        inten = cloud.intensity
        (outdir / "cloud.bin").write_bytes(write_point_cloud(PointCloud(cloud.points, inten)))
    print(f"theta={theta!r} flip={str(flip).lower()} delta_before={before!r} delta_after={after!r}")


def _load_frames(path: Path):
    files = sorted(path.glob("*.txt")) if path.is_dir() else [path]
    return {f.stem: parse_labels(f.read_text()) for f in files}


def cmd_eval(args, cfg):
    gt_path, det_path = Path(args.gt), Path(args.det)
    gt_frames = _load_frames(gt_path)
    det_frames = _load_frames(det_path)
    if not gt_path.is_dir() and not det_path.is_dir():
        # two single files form one frame whatever their names
        det_frames = {gt_path.stem: det_frames[det_path.stem]}
    names = sorted(gt_frames)
    gts, dets = [], []
    for name in names:
        gts.append([GroundTruth(label_to_eval_box(lb), lb.type, lb.bbox_height, lb.occluded, lb.truncated)
                    for lb in gt_frames[name] if lb.type != "DontCare"])
        dets.append([Detection(label_to_eval_box(lb), lb.score if lb.score is not None else 1.0, lb.type,
                               lb.bbox_height) for lb in det_frames.get(name, [])])
    header = ["Class", "IoU", "3D Easy", "3D Mod.", "3D Hard", "BEV Easy", "BEV Mod.", "BEV Hard"]
    row = [args.label, f"{args.iou:.2f}"]
    for mode in ("3d", "bev"):
        for diff in ("easy", "moderate", "hard"):
            row.append(f"{ap_r40(dets, gts, EvalConfig(args.iou, diff, mode, args.label)):.2f}")
    widths = [max(len(h), len(r)) for h, r in zip(header, row)]
    print("  ".join(h.rjust(w) for h, w in zip(header, widths)))
    print("  ".join(r.rjust(w) for r, w in zip(row, widths)))


def cmd_selfcheck(args, cfg):
    from . import selfcheck

    lines = []
    ok = selfcheck.run(cfg.threads, out=lines.append)
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--output", "-o")

    parser = argparse.ArgumentParser(prog="voxelray", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="Gaussian encodings as CSV")
    p.add_argument("--encoder", choices=["query", "orientation"], default="query")
    p.add_argument("--values", help="comma separated positions")
    p.add_argument("--similarity", action="store_true", help="emit the pairwise similarity table instead")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("project", parents=[common], help="project voxel centers through a calibration")
    p.add_argument("--calib", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("occupancy", parents=[common], help="occupancy labels from a velodyne .bin")
    p.add_argument("--cloud", required=True)
    p.add_argument("--naive", action="store_true", help="label every empty voxel FREE")
    p.set_defaults(func=cmd_occupancy)

    p = sub.add_parser("attention-demo", parents=[common], help="local ray attention over FMP1 maps")
    p.add_argument("--keys", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--weights", help="per-voxel weight CSV path")
    p.add_argument("--orientation-aware", action="store_true")
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("augment", parents=[common], help="world rotation/flip with extrinsic update")
    p.add_argument("--calib", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--cloud")
    p.add_argument("--theta", type=float, help="rotation in radians (default: drawn from rotation_range)")
    p.add_argument("--flip", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("eval", parents=[common], help="AP|R40 table from KITTI label/result files")
    p.add_argument("--gt", required=True, help="label file or directory")
    p.add_argument("--det", required=True, help="result file or directory")
    p.add_argument("--label", default="Car")
    p.add_argument("--iou", type=float, default=0.7)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selfcheck", parents=[common], help="run every oracle suite")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("VOXELRAY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        rc = args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - single-line error contract
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
