"""Independent reference computations used by ``selfcheck`` and the tests.

Nothing here calls the code paths it is meant to check: the ray oracles never
step through a grid incrementally, the projection oracle multiplies full
homogeneous matrices, and so on.
"""
from __future__ import annotations

import math

import numpy as np

from .geometry import Box3D, CameraRig


def optical_axis_heading(rig: CameraRig) -> float:
    """Angle of the camera z-axis, expressed in ego coordinates and dropped
    onto the ground plane, measured from ego x."""
    axis = np.linalg.solve(rig.rotation, np.array([0.0, 0.0, 1.0]))
    ground = axis - np.dot(axis, [0.0, 0.0, 1.0]) * np.array([0.0, 0.0, 1.0])
    return math.atan2(ground[1], ground[0])


def homogeneous_transform(matrix: np.ndarray, points) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    hom = np.hstack([pts, np.ones((len(pts), 1))])
    out = hom @ np.asarray(matrix).T
    return out[:, :3] / out[:, 3:4] if out.shape[1] == 4 else out


def project_chain(intrinsic: np.ndarray, extrinsic: np.ndarray, ego_points) -> np.ndarray:
    """Pixels of ego points through the single 3x4 chain ``P @ T``."""
    m = np.asarray(intrinsic) @ np.asarray(extrinsic)
    pts = np.atleast_2d(np.asarray(ego_points, dtype=np.float64))
    hom = np.hstack([pts, np.ones((len(pts), 1))]) @ m.T
    return hom[:, :2] / hom[:, 2:3]


def gaussian_overlap_integral(d1: float, d2: float, sigma: float, samples: int = 200001) -> float:
    """Trapezoidal integral of the product of two unscaled densities."""
    lo, hi = min(d1, d2) - 12 * sigma, max(d1, d2) + 12 * sigma
    x = np.linspace(lo, hi, samples)
    f1 = np.exp(-((x - d1) ** 2) / sigma**2) / (math.sqrt(math.pi) * sigma)
    f2 = np.exp(-((x - d2) ** 2) / sigma**2) / (math.sqrt(math.pi) * sigma)
    y = f1 * f2
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def bilinear_reference(fmap: np.ndarray, u: float, v: float):
    """Four-corner weighted sum written out per channel."""
    h, w, c = fmap.shape
    if not (0 <= u <= w - 1 and 0 <= v <= h - 1):
        return np.zeros(c), False
    out = np.zeros(c)
    for vv in (math.floor(v), math.floor(v) + 1):
        for uu in (math.floor(u), math.floor(u) + 1):
            wt = max(0.0, 1 - abs(u - uu)) * max(0.0, 1 - abs(v - vv))
            if wt > 0:
                out += wt * fmap[vv, uu]
    return out, True


# --------------------------------------------------------------------------
# rays

def segment_box_chord(p0, p1, lo, hi) -> float:
    """Length of the segment ``p0 -> p1`` inside the closed box ``[lo, hi]``."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for a in range(3):
        if d[a] == 0:
            if not lo[a] <= p0[a] <= hi[a]:
                return 0.0
            continue
        ta, tb = (lo[a] - p0[a]) / d[a], (hi[a] - p0[a]) / d[a]
        t0, t1 = max(t0, min(ta, tb)), min(t1, max(ta, tb))
    return max(t1 - t0, 0.0) * float(np.linalg.norm(d))


def dense_sample_voxels(grid, p0, p1, step_fraction: float = 1 / 50) -> set:
    """Voxels hit by samples along the open segment.

    Samples sit every ``voxel_size * step_fraction`` and, so that short corner
    clips are not missed, at the midpoint between every pair of consecutive
    voxel-plane crossings.  The endpoint's own voxel is removed.
    """
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    org, size, dims = np.asarray(grid.origin), np.asarray(grid.voxel_size), np.asarray(grid.dims)
    d = p1 - p0
    length = float(np.linalg.norm(d))
    n = max(int(math.ceil(length / (size.min() * step_fraction))), 1)
    ts = [np.arange(1, n) / n]
    cross = [0.0, 1.0]
    for a in range(3):
        if d[a] != 0:
            planes = org[a] + np.arange(dims[a] + 1) * size[a]
            t = (planes - p0[a]) / d[a]
            cross.extend(t[(t > 0) & (t < 1)])
    cross = np.unique(cross)
    ts.append((cross[1:] + cross[:-1]) / 2)
    t = np.concatenate(ts)
    pts = p0 + t[:, None] * d
    ijk = np.floor((pts - org) / size).astype(np.int64)
    ok = np.all((ijk >= 0) & (ijk < dims), axis=1)
    ijk = ijk[ok]
    idx = set(((ijk[:, 2] * dims[1] + ijk[:, 1]) * dims[0] + ijk[:, 0]).tolist())
    end = np.floor((p1 - org) / size).astype(np.int64)
    if np.all((end >= 0) & (end < dims)):
        idx.discard(int((end[2] * dims[1] + end[1]) * dims[0] + end[0]))
    return idx


def voxel_chord(grid, index: int, p0, p1) -> float:
    nx, ny, _ = grid.dims
    i, j, k = index % nx, (index // nx) % ny, index // (nx * ny)
    lo = np.asarray(grid.origin) + np.array([i, j, k]) * np.asarray(grid.voxel_size)
    return segment_box_chord(p0, p1, lo, lo + np.asarray(grid.voxel_size))


def _slab_intervals(start, d, n):
    """Per-ray t-intervals ``(R, n)`` spent inside each unit slab of one axis."""
    i = np.arange(n)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (i - start[:, None]) / d[:, None]
        tb = (i + 1 - start[:, None]) / d[:, None]
    lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
    flat = d == 0
    if flat.any():
        inside = (i >= np.floor(start[flat])[:, None]) & (i <= np.floor(start[flat])[:, None])
        lo[flat] = np.where(inside, -np.inf, np.inf)
        hi[flat] = np.where(inside, np.inf, -np.inf)
    return lo, hi


def brute_force_overlap(grid, origin, endpoints, chunk: int = 512) -> np.ndarray:
    """Longest parametric stay of any segment ``origin -> endpoint`` per voxel.

    Each voxel column (i, j) is tested against every ray via slab
    intervals, then every k in the column.  Returns floats in linear-index
    order, zero where no segment enters.  Endpoint voxels are not removed;
    callers only use this where those voxels are occupied anyway.
    """
    org, size = np.asarray(grid.origin), np.asarray(grid.voxel_size)
    nx, ny, nz = grid.dims
    g0 = (np.asarray(origin, float) - org) / size
    ends = (np.asarray(endpoints, float).reshape(-1, 3) - org) / size
    best = np.zeros(nz * ny * nx)
    for s in range(0, len(ends), chunk):
        d = ends[s:s + chunk] - g0
        start = np.broadcast_to(g0, d.shape)
        xlo, xhi = _slab_intervals(start[:, 0], d[:, 0], nx)
        ylo, yhi = _slab_intervals(start[:, 1], d[:, 1], ny)
        zlo, zhi = _slab_intervals(start[:, 2], d[:, 2], nz)
        clo = np.maximum(np.maximum(xlo[:, None, :], ylo[:, :, None]), 0.0)  # (R, ny, nx)
        chi = np.minimum(np.minimum(xhi[:, None, :], yhi[:, :, None]), 1.0)
        r, jj, ii = np.nonzero(chi > clo)
        span = np.minimum(chi[r, jj, ii][:, None], zhi[r]) - np.maximum(clo[r, jj, ii][:, None], zlo[r])
        m, kk = np.nonzero(span > 0)
        np.maximum.at(best, (kk * ny + jj[m]) * nx + ii[m], span[m, kk])
    return best


def brute_force_traversed(grid, origin, endpoints, tol: float = 0.0, chunk: int = 512) -> np.ndarray:
    """Boolean mask of voxels some segment stays in for more than ``tol``."""
    return brute_force_overlap(grid, origin, endpoints, chunk) > tol


# --------------------------------------------------------------------------
# boxes and AP

def monte_carlo_bev_iou(a: Box3D, b: Box3D, samples: int = 1_000_000, rng=None) -> float:
    """IoU estimate by uniform sampling over the joint bounding rectangle."""
    rng = np.random.default_rng(0) if rng is None else rng
    ca, cb = a.corners_bev(), b.corners_bev()
    allc = np.vstack([ca, cb])
    lo, hi = allc.min(axis=0), allc.max(axis=0)
    pts = rng.uniform(lo, hi, size=(samples, 2))

    def inside(box: Box3D):
        c, s = math.cos(box.yaw), math.sin(box.yaw)
        rel = pts - [box.x, box.y]
        lx = rel[:, 0] * c + rel[:, 1] * s
        ly = -rel[:, 0] * s + rel[:, 1] * c
        return (np.abs(lx) <= box.length / 2) & (np.abs(ly) <= box.width / 2)

    ia, ib = inside(a), inside(b)
    union = np.count_nonzero(ia | ib)
    return np.count_nonzero(ia & ib) / union if union else 0.0


def anchor_rule(iou: np.ndarray, pos_thr: float, neg_thr: float, force_best: bool = True) -> list:
    """Per-anchor labels from an IoU matrix, evaluated rule by rule."""
    na, ng = iou.shape
    out = []
    for a in range(na):
        row = list(iou[a])
        best = max(row) if row else 0.0
        if best >= pos_thr:
            out.append(row.index(best))
        elif best < neg_thr:
            out.append("neg")
        else:
            out.append("ignore")
    if force_best:
        for g in range(ng):
            col = list(iou[:, g])
            best = max(col)
            if best > 0:
                out[col.index(best)] = g
    return out


def ap_from_pr_table(is_tp: list, num_gt: int, positions: int = 40) -> float:
    """AP from a ranked TP/FP list, written as a plain precision-recall table."""
    rows = []
    tp = fp = 0
    for hit in is_tp:
        tp += hit
        fp += not hit
        rows.append((tp / num_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(1, positions + 1):
        best = 0.0
        for rec, prec in rows:
            if rec >= k / positions and prec > best:
                best = prec
        total += best
    return 100.0 * total / positions
