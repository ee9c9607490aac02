"""In-process oracle suites behind ``voxelray selfcheck``.

Every check uses fixed seeds and prints one deterministic line, so output is
comparable byte for byte across runs and thread counts.
"""
from __future__ import annotations

import hashlib
import math

import numpy as np

from . import encoding as enc
from . import oracles, scenes
from .attention import local_ray_attention, make_orientation_aware_values
from .evaluation import Detection, EvalConfig, GroundTruth, IGNORE, NEGATIVE, ap_r40, assign_anchors, \
    bev_rect, iou_axis_aligned_2d, iou_bev_rotated
from .geometry import (Box3D, PointCloud, apply_world_flip, apply_world_rotation, back_project, ego_to_camera,
                       mirror_intrinsic, orientation_delta, project_to_image, wrap_angle)
from .kitti_io import KittiCalibration, box_to_label, label_to_box, parse_labels, rig_from_calibration
from .occupancy import FREE, OCCUPIED, UNKNOWN, label_occupancy, label_occupancy_naive, traverse_ray
from .voxelgrid import VoxelGrid, bilinear_sample_many, voxel_centers

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _digest(arr) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()[:16]


@check
def orientation_delta_projection(threads):
    rng = np.random.default_rng(1)
    err = 0.0
    for _ in range(200):
        rig = scenes.random_rig(rng)
        err = max(err, abs(wrap_angle(orientation_delta(rig) - oracles.optical_axis_heading(rig))))
    return err < 1e-9, f"max_err={err:.3e}"


@check
def rotation_equivariance(threads):
    rng = np.random.default_rng(2)
    d_err = p_err = 0.0
    for _ in range(200):
        rig = scenes.random_rig(rng)
        theta = rng.uniform(-math.pi / 4, math.pi / 4)
        pts = rng.uniform(-30, 30, (8, 3))
        new, _, cloud = apply_world_rotation(rig, [], PointCloud(pts), theta)
        d_err = max(d_err, abs(wrap_angle(orientation_delta(new) - orientation_delta(rig) - theta)))
        p_err = max(p_err, np.abs(ego_to_camera(new, cloud.points) - ego_to_camera(rig, pts)).max())
    return d_err < 1e-9 and p_err < 1e-9, f"delta_err={d_err:.3e} point_err={p_err:.3e}"


@check
def flip_pixel_mirror(threads):
    rng = np.random.default_rng(3)
    err = 0.0
    for _ in range(200):
        rig = scenes.random_rig(rng)
        pts = rng.uniform(-30, 30, (16, 3))
        new, _, cloud, _ = apply_world_flip(rig, [], PointCloud(pts))
        new = mirror_intrinsic(new)
        uv, _, ok = project_to_image(rig, ego_to_camera(rig, pts), image_size=None)
        uv2, _, _ = project_to_image(new, ego_to_camera(new, cloud.points), image_size=None)
        w = rig.image_size[1]
        if ok.any():
            err = max(err, np.abs(uv2[ok, 0] - (w - 1 - uv[ok, 0])).max(), np.abs(uv2[ok, 1] - uv[ok, 1]).max())
    return err < 1e-6, f"max_px_err={err:.3e}"


@check
def camera_transform_matrix(threads):
    rng = np.random.default_rng(4)
    err = 0.0
    for _ in range(100):
        rig = scenes.random_rig(rng)
        pts = rng.uniform(-50, 50, (32, 3))
        err = max(err, np.abs(ego_to_camera(rig, pts) - oracles.homogeneous_transform(rig.extrinsic, pts)).max())
    return err < 1e-9, f"max_err={err:.3e}"


@check
def projection_matrix(threads):
    rng = np.random.default_rng(5)
    err = rt = 0.0
    for _ in range(100):
        rig = scenes.random_rig(rng)
        pts = rng.uniform(-50, 50, (32, 3))
        uv, _, ok = project_to_image(rig, ego_to_camera(rig, pts), image_size=None)
        ref = oracles.project_chain(rig.intrinsic, rig.extrinsic, pts)
        if ok.any():
            err = max(err, np.abs(uv[ok] - ref[ok]).max())
            cam = ego_to_camera(rig, pts[ok])
            rt = max(rt, np.abs(back_project(rig, uv[ok], cam[:, 2]) - pts[ok]).max())
    return err < 1e-6 and rt < 1e-6, f"px_err={err:.3e} roundtrip_err={rt:.3e}"


@check
def gaussian_density_value(threads):
    e = enc.GaussianEncoder(8, -4.0, 4.0, 1.0)
    got = float(enc.gaussian_density(1.0, 0.0, e))
    ref = math.exp(-1.0) / math.sqrt(math.pi)
    return abs(got - ref) < 1e-15 and abs(got - 0.207554) < 1e-6, f"value={got:.6f}"


@check
def encoding_similarity(threads):
    rng = np.random.default_rng(6)
    err = integ = 0.0
    for _ in range(100):
        sigma = rng.uniform(0.5, 3.0)
        e = enc.GaussianEncoder(int(rng.integers(64, 200)), 0.0, 60.0, sigma)
        if e.delta_x > sigma / 2:
            e = enc.GaussianEncoder(int(math.ceil(120.0 / sigma)) + 2, 0.0, 60.0, sigma)
        d1, d2 = rng.uniform(4 * sigma, 60 - 4 * sigma, 2)
        got = enc.similarity(enc.encode(e, d1), enc.encode(e, d2))
        err = max(err, abs(got - float(enc.expected_similarity(d1 - d2, sigma))))
        integral = oracles.gaussian_overlap_integral(d1, d2, sigma) * math.sqrt(2 * math.pi) * sigma
        integ = max(integ, abs(integral - float(enc.expected_similarity(d1 - d2, sigma))))
    return err < 2e-3 and integ < 1e-6, f"closed_form_err={err:.3e} integral_err={integ:.3e}"


@check
def sinusoidal_shift(threads):
    rng = np.random.default_rng(7)
    n = 32
    freqs = enc.sinusoidal_frequencies(n)
    err = 0.0
    for _ in range(50):
        d, k = rng.uniform(-100, 100, 2)
        a = enc.sinusoidal_encode(n, d)
        b = enc.sinusoidal_encode(n, d + k)
        pred = np.empty(n)
        for i, w in enumerate(freqs):
            c, s = math.cos(w * k), math.sin(w * k)
            pred[2 * i] = c * a[2 * i] + s * a[2 * i + 1]
            pred[2 * i + 1] = -s * a[2 * i] + c * a[2 * i + 1]
        err = max(err, np.abs(pred - b).max())
    return err < 1e-9, f"max_err={err:.3e}"


@check
def voxel_center_formula(threads):
    rng = np.random.default_rng(8)
    err = 0.0
    for _ in range(20):
        grid = VoxelGrid(rng.uniform(-5, 5, 3), rng.uniform(0.1, 1.0, 3), rng.integers(1, 9, 3))
        c = voxel_centers(grid)
        for idx in rng.integers(0, grid.num_voxels, 10):
            nx, ny, _ = grid.dims
            i, j, k = idx % nx, (idx // nx) % ny, idx // (nx * ny)
            ref = np.array(grid.origin) + (np.array([i, j, k]) + 0.5) * np.array(grid.voxel_size)
            err = max(err, np.abs(c[idx] - ref).max())
    return err < 1e-12, f"max_err={err:.3e}"


@check
def bilinear_four_corner(threads):
    rng = np.random.default_rng(9)
    fmap = rng.normal(size=(7, 9, 5))
    u = rng.uniform(-1, 9, 300)
    v = rng.uniform(-1, 7, 300)
    got, ok = bilinear_sample_many(fmap, u, v)
    err = 0.0
    mism = 0
    for n in range(300):
        ref, rok = oracles.bilinear_reference(fmap, u[n], v[n])
        mism += rok != ok[n]
        err = max(err, np.abs(got[n] - ref).max())
    return err < 1e-9 and mism == 0, f"max_err={err:.3e} flag_mismatch={mism}"


@check
def attention_closed_form(threads):
    rig = scenes.mounted_rig(yaw=0.3, focal=30.0, image_size=(24, 40))
    e = enc.GaussianEncoder(128, 0.0, 64.0, 1.5)
    z_star = 20.0
    keys = scenes.constant_key_map(e, z_star, 24, 40)
    values = np.ones((24, 40, 3))
    grid = VoxelGrid((0.0, -20.0, -2.0), (0.5, 0.5, 0.5), (80, 80, 8))
    out = local_ray_attention(keys, values, grid, rig, e, threads=threads)
    cam = ego_to_camera(rig, voxel_centers(grid))
    sel = out.valid & (cam[:, 2] > 4 * e.sigma) & (cam[:, 2] < 64 - 4 * e.sigma)
    ref = enc.expected_similarity(cam[sel, 2] - z_star, e.sigma)
    err = np.abs(out.weights[sel] - ref).max()
    slope_err = 0.0
    for d in (z_star - 3.0, z_star - 1.0, z_star + 0.7, z_star + 2.5):
        h = 1e-4
        grid_p = scenes.single_voxel_at_depth(rig, d + h)
        grid_m = scenes.single_voxel_at_depth(rig, d - h)
        wp = local_ray_attention(keys, values, grid_p, rig, e).weights[0]
        wm = local_ray_attention(keys, values, grid_m, rig, e).weights[0]
        fd = (wp - wm) / (2 * h)
        analytic = -(d - z_star) / e.sigma**2 * math.exp(-((d - z_star) ** 2) / (2 * e.sigma**2))
        slope_err = max(slope_err, abs(fd - analytic) / abs(analytic))
    return err < 2e-3 and slope_err < 1e-3, (
        f"voxels={int(sel.sum())} weight_err={err:.3e} slope_rel_err={slope_err:.3e} digest={_digest(out.values)}")


@check
def attention_hand_product(threads):
    rig = scenes.mounted_rig(focal=20.0, image_size=(16, 24))
    e = enc.GaussianEncoder(16, 0.0, 30.0, 4.0)
    rng = np.random.default_rng(10)
    keys = rng.normal(size=(16, 24, 16))
    values = rng.normal(size=(16, 24, 4))
    grid = scenes.single_voxel_at_depth(rig, 12.0, pixel=(7.0, 5.0))
    out = local_ray_attention(keys, values, grid, rig, e)
    depth = ego_to_camera(rig, voxel_centers(grid))[0, 2]
    q = e.coefficient * np.exp(-((e.grid - depth) ** 2) / e.sigma**2)
    w = sum(keys[5, 7, c] * q[c] for c in range(16))
    err = np.abs(out.values[0] - w * values[5, 7]).max()
    return err < 1e-6, f"weight={w:.6f} err={err:.3e}"


@check
def orientation_aware_channels(threads):
    feats = np.random.default_rng(11).normal(size=(6, 8, 64))
    delta = 0.3
    out = make_orientation_aware_values(feats, delta, enc.ORIENTATION_ENCODER)
    p = enc.encode(enc.ORIENTATION_ENCODER, delta)
    ok = out.shape == (6, 8, 128) and np.array_equal(out[..., :64], feats) and np.array_equal(
        out[..., 64:], np.broadcast_to(p, (6, 8, 64)))
    return ok, f"channels={out.shape[2]}"


@check
def traversal_dense_sampling(threads):
    rng = np.random.default_rng(12)
    grid = VoxelGrid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (32, 32, 32))
    bad = 0
    visited = 0
    for _ in range(300):
        p0, p1 = rng.uniform(-4, 36, (2, 3))
        got = traverse_ray(grid, p0, p1)
        ref = oracles.dense_sample_voxels(grid, p0, p1)
        visited += len(got)
        diff = set(got) ^ ref
        bad += sum(1 for i in diff if oracles.voxel_chord(grid, i, p0, p1) > 1e-9)
    return bad == 0, f"rays=300 visited={visited} mismatches={bad}"


@check
def occupancy_brute_force(threads):
    rng = np.random.default_rng(13)
    grid = VoxelGrid((-8.0, -8.0, -4.0), (0.5, 0.5, 0.5), (32, 32, 16))
    sensor = (0.1, 0.2, 0.3)
    cloud = PointCloud(rng.uniform([-10, -10, -5], [10, 10, 5], (2000, 3)))
    occ = label_occupancy(grid, cloud, sensor, threads=threads)
    trav = oracles.brute_force_traversed(grid, sensor, cloud.points)
    ijk, inside = grid.voxel_of(cloud.points)
    occupied = np.zeros(grid.num_voxels, bool)
    occupied[grid.linear_index(*ijk[inside].T)] = True
    ref = np.where(occupied, OCCUPIED, np.where(trav, FREE, UNKNOWN)).astype(np.uint8)
    mism = int(np.count_nonzero(occ.labels != ref))
    c = occ.counts()
    return mism == 0, f"occupied={c['occupied']} free={c['free']} unknown={c['unknown']} mismatches={mism} digest={_digest(occ.labels)}"


@check
def occupancy_false_negatives(threads):
    grid, cloud, sensor, _, behind = scenes.occluder_scene()
    tn = label_occupancy(grid, cloud, sensor, threads=threads).labels
    naive = label_occupancy_naive(grid, cloud).labels
    free_naive = sum(int(naive[i] == FREE) for i in behind)
    unknown_tn = sum(int(tn[i] == UNKNOWN) for i in behind)
    same_occ = np.array_equal(tn == OCCUPIED, naive == OCCUPIED)
    return free_naive >= 1 and unknown_tn == free_naive and same_occ, (
        f"behind={len(behind)} naive_free={free_naive} tn_unknown={unknown_tn}")


@check
def rotated_iou_monte_carlo(threads):
    rng = np.random.default_rng(14)
    err = 0.0
    for _ in range(20):
        a = Box3D(*rng.uniform(-1, 1, 2), 0.0, *rng.uniform(1, 4, 2), 1.0, rng.uniform(-math.pi, math.pi))
        b = Box3D(*rng.uniform(-1, 1, 2), 0.0, *rng.uniform(1, 4, 2), 1.0, rng.uniform(-math.pi, math.pi))
        err = max(err, abs(iou_bev_rotated(a, b) - oracles.monte_carlo_bev_iou(a, b, 400_000, rng)))
    return err < 0.005, f"max_err={err:.4f}"


@check
def anchor_rule_oracle(threads):
    gts = [Box3D(0, 0, 0, 4, 2, 1.5, 0), Box3D(10, 0, 0, 4, 2, 1.5, 0)]
    anchors = [Box3D(0.2, 0, 0, 4, 2, 1.5, 0), Box3D(1.2, 0, 0, 4, 2, 1.5, 0), Box3D(30, 0, 0, 4, 2, 1.5, 0),
               Box3D(11.6, 0, 0, 4, 2, 1.5, 0)]
    got = assign_anchors(anchors, gts, 0.6, 0.45)
    iou = np.array([[iou_axis_aligned_2d(bev_rect(a), bev_rect(g)) for g in gts] for a in anchors])
    ref = oracles.anchor_rule(iou, 0.6, 0.45)
    conv = [int(x) if x >= 0 else ("neg" if x == NEGATIVE else "ignore") for x in got]
    return conv == ref, f"assignment={conv}"


@check
def ap_toy_table(threads):
    gts = [GroundTruth(Box3D(10 * i, 0, 0, 4, 2, 1.5, 0)) for i in range(3)]
    dets = [Detection(gts[0].box, 0.9), Detection(Box3D(50, 50, 0, 4, 2, 1.5, 0), 0.8),
            Detection(gts[1].box, 0.7), Detection(gts[2].box, 0.6), Detection(Box3D(0.1, 0, 0, 4, 2, 1.5, 0), 0.5)]
    got = ap_r40([dets], [gts], EvalConfig(0.7))
    ref = oracles.ap_from_pr_table([True, False, True, True, False], 3)
    return got == ref, f"ap={got:.4f}"


@check
def kitti_label_round_trip(threads):
    yaw = 0.2
    rig = scenes.mounted_rig(yaw=yaw, position=(0.3, -0.1, 1.6))
    calib = KittiCalibration(rig.intrinsic, rig.intrinsic, np.eye(3), rig.extrinsic[:3, :])
    crig = rig_from_calibration(calib)
    line = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n"
    lab = parse_labels(line)[0]
    back = box_to_label(label_to_box(lab, crig), crig, template=lab)
    err = max(abs(a - b) for a, b in zip(back.location + back.dimensions + (back.rotation_y,),
                                          lab.location + lab.dimensions + (lab.rotation_y,)))
    d_err = abs(orientation_delta(crig) - yaw)
    pts = np.random.default_rng(15).uniform([5, -10, -2], [60, 10, 2], (20, 3))
    uv, _, _ = project_to_image(crig, ego_to_camera(crig, pts), image_size=None)
    chain = oracles.project_chain(calib.P2, np.vstack([calib.R0_rect @ calib.Tr_velo_to_cam, [0, 0, 0, 1]]), pts)
    px = np.abs(uv - chain).max()
    return err < 1e-6 and d_err < 1e-9 and px < 1e-6, f"label_err={err:.3e} delta_err={d_err:.3e} px_err={px:.3e}"


def run(threads: int = 1, out=print) -> bool:
    ok_all = True
    for fn in CHECKS:
        ok, detail = fn(threads)
        ok_all &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'} {fn.__name__} {detail}")
    out(f"{'PASS' if ok_all else 'FAIL'} selfcheck {sum(1 for _ in CHECKS)} suites")
    return ok_all
