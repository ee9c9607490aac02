"""Acceptance criteria, one printed PASS/FAIL line each.

Run under pytest (lines show in the -v log) or directly with
``python3 tests/test_acceptance.py``.
"""
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from voxelray import scenes
from voxelray.attention import local_ray_attention
from voxelray.encoding import QUERY_ENCODER, GaussianEncoder, encode
from voxelray.evaluation import Detection, EvalConfig, GroundTruth, ap_r40, bev_rect, iou_axis_aligned_2d, \
    iou_bev_rotated
from voxelray.geometry import (Box3D, CameraRig, PointCloud, apply_world_flip, apply_world_rotation, ego_to_camera,
                               mirror_intrinsic, orientation_delta, wrap_angle)
from voxelray.occupancy import OCCUPIED, UNKNOWN, FREE, label_occupancy, label_occupancy_naive, traverse_ray
from voxelray.oracles import (ap_from_pr_table, brute_force_overlap, brute_force_traversed, dense_sample_voxels,
                              monte_carlo_bev_iou)
from voxelray.voxelgrid import VoxelGrid


def c1_similarity():
    rng = np.random.default_rng(101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        sigma = rng.uniform(0.2, 3.0)
        dx = rng.uniform(0.1, 0.5) * sigma
        d1, d2 = rng.uniform(0, 20 * sigma, 2)
        lo = min(d1, d2) - 4 * sigma - rng.uniform(0, 2 * sigma)
        n = int(math.ceil((max(d1, d2) + 4 * sigma - lo) / dx)) + 1
        enc = GaussianEncoder(n, lo, lo + (n - 1) * dx, sigma)
        dot = float(encode(enc, d1) @ encode(enc, d2))
        worst = max(worst, abs(dot - math.exp(-((d1 - d2) ** 2) / (2 * sigma**2))))
    elapsed = time.perf_counter() - t0
    return worst <= 2e-3 and elapsed < 1.0, f"max_err={worst:.2e} time={elapsed:.2f}s"


def c2_rotation():
    rng = np.random.default_rng(102)
    d_err = p_err = 0.0
    for _ in range(1000):
        rig = scenes.random_rig(rng)
        theta = rng.uniform(-math.pi / 4, math.pi / 4)
        pts = rng.uniform(-50, 50, (16, 3))
        rig2, _, cloud2 = apply_world_rotation(rig, [], PointCloud(pts), theta)
        d_err = max(d_err, abs(wrap_angle(orientation_delta(rig2) - orientation_delta(rig) - theta)))
        p_err = max(p_err, float(np.abs(ego_to_camera(rig2, cloud2.points) - ego_to_camera(rig, pts)).max()))
    return d_err <= 1e-9 and p_err <= 1e-9, f"delta_err={d_err:.2e} point_err={p_err:.2e}"


def _pixels(rig: CameraRig, pts):
    h = np.hstack([pts, np.ones((len(pts), 1))]) @ (rig.intrinsic @ rig.extrinsic).T
    return h[:, :2] / h[:, 2:], h[:, 2]


def c3_flip():
    rng = np.random.default_rng(103)
    exact = True
    u_err = 0.0
    for _ in range(1000):
        rig = scenes.random_rig(rng)
        boxes = scenes.random_boxes(rng, 4)
        cloud = scenes.random_cloud(rng, 32)
        r1, b1, c1, _ = apply_world_flip(rig, boxes, cloud)
        r2, b2, c2, _ = apply_world_flip(r1, b1, c1)
        exact &= (np.array_equal(r2.extrinsic, rig.extrinsic) and b2 == boxes
                  and np.array_equal(c2.points, cloud.points) and r2.handedness == rig.handedness)
        uv, w = _pixels(rig, cloud.points)
        uv1, _ = _pixels(mirror_intrinsic(r1), c1.points)
        ok = w > 1e-3
        width = rig.image_size[1]
        u_err = max(u_err, float(np.abs(uv1[ok, 0] - (width - 1 - uv[ok, 0])).max(initial=0.0)),
                    float(np.abs(uv1[ok, 1] - uv[ok, 1]).max(initial=0.0)))
    return exact and u_err <= 1e-6, f"involution_exact={exact} max_pixel_err={u_err:.2e}"


def c4_occupancy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    cube = VoxelGrid((0.0, 0.0, 0.0), 1.0, (32, 32, 32))
    ray_mismatch = 0
    for _ in range(1000):
        p0, p1 = rng.uniform(0, 32, (2, 3))
        got = set(traverse_ray(cube, p0, p1))
        if got != dense_sample_voxels(cube, p0, p1):
            # allow only voxels whose chord is a boundary graze
            strict = set(np.flatnonzero(brute_force_traversed(cube, p0, [p1], tol=1e-9)))
            loose = set(np.flatnonzero(brute_force_traversed(cube, p0, [p1], tol=0.0)))
            end = cube.voxel_of(p1)[0][0]
            strict.discard(int(cube.linear_index(*end)))
            loose.discard(int(cube.linear_index(*end)))
            if not strict <= got <= loose:
                ray_mismatch += 1
    grid = VoxelGrid((-16.0, -16.0, -8.0), (1.0, 1.0, 0.5), (32, 32, 32))
    sensor = np.array([0.3, -0.2, 0.1])
    scene_mismatch = 0
    for _ in range(20):
        pts = rng.uniform([-18, -18, -9], [18, 18, 9], (10_000, 3))
        occ = label_occupancy(grid, PointCloud(pts), sensor)
        occupied = occ.labels == OCCUPIED
        overlap = brute_force_overlap(grid, sensor, pts)
        ref_loose, ref_strict = overlap > 0.0, overlap > 1e-9
        free = occ.labels == FREE
        ok = (occupied == label_occupancy_naive(grid, PointCloud(pts)).labels.astype(bool)).all()
        ok &= not (free & ~ref_loose).any()
        ok &= not (ref_strict & ~occupied & (occ.labels == UNKNOWN)).any()
        scene_mismatch += not ok
    elapsed = time.perf_counter() - t0
    return (ray_mismatch == 0 and scene_mismatch == 0 and elapsed < 30,
            f"ray_mismatches={ray_mismatch}/1000 scene_mismatches={scene_mismatch}/20 time={elapsed:.1f}s")


def c5_occluder():
    grid, cloud, sensor, _, behind = scenes.occluder_scene()
    true_neg = label_occupancy(grid, cloud, sensor)
    naive = label_occupancy_naive(grid, cloud)
    naive_free = int((naive.labels[behind] == FREE).sum())
    all_unknown = bool((true_neg.labels[behind] == UNKNOWN).all())
    same_occ = bool(np.array_equal(true_neg.labels == OCCUPIED, naive.labels == OCCUPIED))
    return (naive_free >= 1 and all_unknown and same_occ,
            f"naive_free_behind={naive_free}/{len(behind)} true_negative_unknown={all_unknown} occupied_equal={same_occ}")


def _forward_rig():
    ext = np.eye(4)
    ext[:3, :3] = scenes.EGO_TO_CAMERA_AXES
    return CameraRig(np.array([[30.0, 0, 20, 0], [0, 30.0, 12, 0], [0, 0, 1, 0]]), ext, image_size=(24, 40))


def _weight(rig, z_star, depth):
    grid = scenes.single_voxel_at_depth(rig, depth)
    keys = scenes.constant_key_map(QUERY_ENCODER, z_star, 24, 40)
    return float(local_ray_attention(keys, np.ones((24, 40, 1)), grid, rig, QUERY_ENCODER).weights[0])


def c6_attention():
    rig = _forward_rig()
    sigma = QUERY_ENCODER.sigma
    w_err = s_err = 0.0
    rng = np.random.default_rng(106)
    for _ in range(40):
        z_star = rng.uniform(10, 50)
        depth = z_star + rng.uniform(-2.5, 2.5) * sigma
        w_err = max(w_err, abs(_weight(rig, z_star, depth) - math.exp(-((depth - z_star) ** 2) / (2 * sigma**2))))
        if abs(depth - z_star) > 0.2 * sigma:
            h = 1e-3
            fd = (_weight(rig, z_star, depth + h) - _weight(rig, z_star, depth - h)) / (2 * h)
            an = -(depth - z_star) / sigma**2 * math.exp(-((depth - z_star) ** 2) / (2 * sigma**2))
            s_err = max(s_err, abs(fd - an) / abs(an))
    return w_err <= 2e-3 and s_err <= 1e-3, f"max_weight_err={w_err:.2e} max_slope_rel_err={s_err:.2e}"


def c7_iou():
    rng = np.random.default_rng(107)
    mc_err = 0.0
    for _ in range(500):
        a = Box3D(*rng.uniform(-1, 1, 2), 0.0, *rng.uniform([1, 0.5], [5, 3]), 1.0, rng.uniform(-math.pi, math.pi))
        b = Box3D(*rng.uniform(-1, 1, 2), 0.0, *rng.uniform([1, 0.5], [5, 3]), 1.0, rng.uniform(-math.pi, math.pi))
        mc_err = max(mc_err, abs(iou_bev_rotated(a, b) - monte_carlo_bev_iou(a, b, 1_000_000, rng)))
    aa_err = 0.0
    for _ in range(500):
        a = Box3D(*rng.uniform(-2, 2, 2), 0.0, *rng.uniform([1, 0.5], [5, 3]), 1.0, 0.0)
        b = Box3D(*rng.uniform(-2, 2, 2), 0.0, *rng.uniform([1, 0.5], [5, 3]), 1.0, 0.0)
        ref = iou_axis_aligned_2d(bev_rect(a, snap=False), bev_rect(b, snap=False))
        aa_err = max(aa_err, abs(iou_bev_rotated(a, b) - ref))
    return mc_err <= 0.005 and aa_err <= 1e-9, f"max_mc_err={mc_err:.4f} max_yaw0_err={aa_err:.1e}"


def _car(x):
    return Box3D(x, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0)


def c8_ap():
    gts = [[GroundTruth(_car(10.0 * i)) for i in range(4)]]
    # ranked TP, FP, TP, TP, FP; by hand: 10 recall points at precision 1, 20 at 0.75, 10 at 0
    dets = [Detection(_car(0), 0.9), Detection(_car(55), 0.8), Detection(_car(10), 0.7),
            Detection(_car(20), 0.6), Detection(_car(75), 0.5)]
    toy = ap_r40([dets], gts)
    hand = 100.0 * (10 * 1.0 + 20 * 0.75) / 40
    toy_ok = toy == hand == ap_from_pr_table([1, 0, 1, 1, 0], 4)
    perfect = ap_r40([[Detection(g.box, 0.5) for g in gts[0]]], gts)
    rng = np.random.default_rng(108)
    invariant = True
    for _ in range(20):
        frames = [[GroundTruth(_car(10.0 * i + 100 * f)) for i in range(5)] for f in range(3)]
        ds = [[Detection(_car(10.0 * i + 100 * f + rng.uniform(-1.5, 1.5)), float(rng.uniform()))
               for i in range(7)] for f in range(3)]
        for cfg in (EvalConfig(mode="3d"), EvalConfig(mode="bev", iou_threshold=0.5)):
            base = ap_r40(ds, frames, cfg)
            for fn in (lambda s: 3 * s + 1, lambda s: math.exp(5 * s), lambda s: 1 / (1 + math.exp(-s))):
                moved = [[Detection(d.box, fn(d.score)) for d in fr] for fr in ds]
                invariant &= ap_r40(moved, frames, cfg) == base
    return (toy_ok and perfect == 100.0 and invariant,
            f"toy_ap={toy} hand={hand} perfect={perfect} monotone_invariant={invariant}")


def c9_throughput():
    rng = np.random.default_rng(109)
    grid = VoxelGrid((0.0, -40.0, -3.0), 0.4, (176, 200, 16))
    pts = np.column_stack([rng.uniform(0, 70.4, 100_000), rng.uniform(-40, 40, 100_000), rng.uniform(-3, 3.4, 100_000)])
    cloud = PointCloud(pts)
    label_occupancy(grid, PointCloud(pts[:100]))  # warm-up
    t0 = time.perf_counter()
    label_occupancy(grid, cloud, (0.0, 0.0, 0.0))
    t_occ = time.perf_counter() - t0

    rig = scenes.mounted_rig().rescaled(0.25)
    h, w = rig.image_size
    keys = rng.uniform(0, 0.2, (h, w, 64))
    values = rng.normal(size=(h, w, 64)).astype(np.float32)
    t0 = time.perf_counter()
    local_ray_attention(keys, values, grid, rig, QUERY_ENCODER)
    t_att = time.perf_counter() - t0
    from voxelray import _kernels
    return t_occ < 1.0 and t_att < 2.0, f"occupancy_100k={t_occ:.3f}s attention_C64={t_att:.3f}s backend={_kernels.BACKEND}"


def c10_determinism():
    def run(threads):
        r = subprocess.run([sys.executable, "-m", "voxelray.cli", "selfcheck", "--threads", str(threads)],
                           capture_output=True)
        return r.returncode, r.stdout

    rc1, out1 = run(1)
    n = max(os.cpu_count() or 1, 4)
    rcn, outn = run(n)
    same = out1 == outn
    return same and rc1 == 0 and rcn == 0, f"identical={same} threads=1,{n} exit={rc1},{rcn} bytes={len(out1)}"


CRITERIA = [
    ("1 gaussian similarity closed form", c1_similarity),
    ("2 rotation equivariance of delta", c2_rotation),
    ("3 flip involution and pixel mirror", c3_flip),
    ("4 traversal and occupancy oracles", c4_occupancy),
    ("5 occluder discrimination", c5_occluder),
    ("6 ray attention closed form", c6_attention),
    ("7 rotated BEV IoU", c7_iou),
    ("8 AP|R40", c8_ap),
    ("9 throughput", c9_throughput),
    ("10 selfcheck determinism", c10_determinism),
]


def _line(name, ok, detail):
    return f"ACCEPTANCE {'PASS' if ok else 'FAIL'} [{name}] {detail}"


@pytest.mark.parametrize("name,fn", CRITERIA, ids=[n.split()[0] for n, _ in CRITERIA])
def test_criterion(name, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    results = []
    for name, fn in CRITERIA:
        ok, detail = fn()
        results.append(ok)
        print(_line(name, ok, detail), flush=True)
    sys.exit(0 if all(results) else 1)
