"""Box overlap, anchor assignment and KITTI-style AP with 40 recall points."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Box3D

NEGATIVE = -1
IGNORE = -2

# min 2D box height (px), max occlusion, max truncation
DIFFICULTY = {
    "easy": (40.0, 0, 0.15),
    "moderate": (25.0, 1, 0.30),
    "hard": (25.0, 2, 0.50),
}


class DegenerateBoxError(ValueError):
    pass


# --------------------------------------------------------------------------
# overlaps

def _check_rect(r):
    x0, y0, x1, y1 = (float(v) for v in r)
    if not (x1 > x0 and y1 > y0):
        raise DegenerateBoxError(f"rectangle {r} has non-positive side length")
    return x0, y0, x1, y1


def iou_axis_aligned_2d(a, b) -> float:
    """IoU of rectangles given as ``(x_min, y_min, x_max, y_max)``."""
    ax0, ay0, ax1, ay1 = _check_rect(a)
    bx0, by0, bx1, by1 = _check_rect(b)
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def bev_rect(box: Box3D, snap: bool = True):
    """Axis-aligned footprint of a box.

    With ``snap`` the yaw is rounded to the nearest multiple of pi/2 first,
    which swaps length and width for boxes facing sideways.
    """
    l, w = box.length, box.width
    if snap and abs(math.sin(box.yaw)) > abs(math.cos(box.yaw)):
        l, w = w, l
    return (box.x - l / 2, box.y - w / 2, box.x + l / 2, box.y + w / 2)


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject: np.ndarray, clip: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Sutherland-Hodgman clipping of ``subject`` by convex CCW ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        ex, ey = b[0] - a[0], b[1] - a[1]
        scale = math.hypot(ex, ey)

        def side(p):
            return (ex * (p[1] - a[1]) - ey * (p[0] - a[0])) / scale

        inp, out = out, []
        for j, cur in enumerate(inp):
            prev = inp[j - 1]
            sc, sp = side(cur), side(prev)
            if sc >= -eps:
                if sp < -eps:
                    t = sp / (sp - sc)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif sp >= -eps:
                t = sp / (sp - sc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def bev_intersection(a: Box3D, b: Box3D) -> float:
    return max(_polygon_area(clip_polygon(a.corners_bev(), b.corners_bev())), 0.0)


def iou_bev_rotated(a: Box3D, b: Box3D) -> float:
    """Rotated footprint IoU."""
    area_a, area_b = a.length * a.width, b.length * b.width
    inter = min(bev_intersection(a, b), area_a, area_b)
    return inter / (area_a + area_b - inter)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Rotated footprint overlap times vertical overlap, over the union volume."""
    zo = min(a.z + a.height / 2, b.z + b.height / 2) - max(a.z - a.height / 2, b.z - b.height / 2)
    if zo <= 0:
        return 0.0
    va = a.length * a.width * a.height
    vb = b.length * b.width * b.height
    inter = min(bev_intersection(a, b) * zo, va, vb)
    return inter / (va + vb - inter)


# --------------------------------------------------------------------------
# anchors

def assign_anchors(anchors: Sequence[Box3D], gts: Sequence[Box3D], pos_thr: float = 0.6,
                   neg_thr: float = 0.45, force_best: bool = True) -> np.ndarray:
    """Per-anchor assignment by axis-aligned BEV IoU.

    Entry ``i`` is the matched ground-truth index, ``NEGATIVE`` or
    ``IGNORE``.  With ``force_best`` each ground truth also claims its
    highest-IoU anchor (when that IoU is positive).
    """
    if not 0 <= neg_thr <= pos_thr <= 1:
        raise ValueError("need 0 <= neg_thr <= pos_thr <= 1")
    na, ng = len(anchors), len(gts)
    result = np.full(na, NEGATIVE, dtype=np.int64)
    if na == 0 or ng == 0:
        return result
    ra = [bev_rect(a) for a in anchors]
    rg = [bev_rect(g) for g in gts]
    iou = np.array([[iou_axis_aligned_2d(x, y) for y in rg] for x in ra])
    best_gt = iou.argmax(axis=1)
    best = iou[np.arange(na), best_gt]
    result[best >= neg_thr] = IGNORE
    pos = best >= pos_thr
    result[pos] = best_gt[pos]
    if force_best:
        for g in range(ng):
            a = int(iou[:, g].argmax())
            if iou[a, g] > 0:
                result[a] = g
    return result


# --------------------------------------------------------------------------
# average precision

@dataclass(frozen=True)
class GroundTruth:
    box: Box3D
    label: str = "Car"
    height_px: float = math.inf
    occlusion: int = 0
    truncation: float = 0.0


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    label: str = "Car"
    height_px: float = math.inf

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.7
    difficulty: str = "moderate"
    mode: str = "3d"
    label: str = "Car"
    recall_positions: int = field(default=40)

    def __post_init__(self):
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.difficulty not in DIFFICULTY:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if self.mode not in ("3d", "bev"):
            raise ValueError("mode must be '3d' or 'bev'")


def _gt_ignored(gt: GroundTruth, cfg: EvalConfig) -> bool:
    min_h, max_occ, max_trunc = DIFFICULTY[cfg.difficulty]
    return gt.height_px < min_h or gt.occlusion > max_occ or gt.truncation > max_trunc


def match_frame(dets: Sequence[Detection], gts: Sequence[GroundTruth], cfg: EvalConfig):
    """Greedy matching in descending score order for one frame.

    Returns ``(scores, is_tp)`` for the detections that count, and the number
    of ground truths that count.  Detections matched to an ignored ground
    truth, or smaller than the difficulty's minimum height, are dropped.
    """
    overlap = iou_3d if cfg.mode == "3d" else iou_bev_rotated
    gts = [g for g in gts if g.label == cfg.label]
    dets = [d for d in dets if d.label == cfg.label]
    ignored = [_gt_ignored(g, cfg) for g in gts]
    min_h = DIFFICULTY[cfg.difficulty][0]
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    taken = [False] * len(gts)
    scores, tps = [], []
    for i in order:
        d = dets[i]
        ious = [overlap(d.box, g.box) for g in gts]
        best, best_j = -1.0, -1
        for want_ignored in (False, True):
            for j, v in enumerate(ious):
                if ignored[j] == want_ignored and not taken[j] and v >= cfg.iou_threshold and v > best:
                    best, best_j = v, j
            if best_j >= 0:
                break
        if best_j >= 0:
            taken[best_j] = True
            if ignored[best_j]:
                continue
            scores.append(d.score)
            tps.append(True)
        elif d.height_px >= min_h:
            scores.append(d.score)
            tps.append(False)
    return scores, tps, sum(1 for x in ignored if not x)


def precision_recall(scores, tps, num_gt):
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    tp = np.asarray(tps, dtype=bool)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    precision = ctp / np.maximum(ctp + cfp, 1)
    recall = ctp / num_gt if num_gt else np.zeros_like(precision, dtype=float)
    return precision, recall


def interpolated_ap(precision, recall, positions: int = 40) -> float:
    """Mean of the interpolated precision at recalls k/positions, in percent."""
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    total = 0.0
    for k in range(1, positions + 1):
        r = k / positions
        mask = recall >= r
        total += precision[mask].max() if mask.any() else 0.0
    return 100.0 * total / positions


def ap_r40(detections: Sequence[Sequence[Detection]], gts: Sequence[Sequence[GroundTruth]],
           config: EvalConfig = EvalConfig()) -> float:
    """AP|R40 over frames; ``detections[f]`` and ``gts[f]`` belong to frame f."""
    if len(detections) != len(gts):
        raise ValueError("detections and ground truths must cover the same frames")
    scores, tps, num_gt = [], [], 0
    frames = [match_frame(d, g, config) for d, g in zip(detections, gts)]
    for s, t, n in frames:
        scores += s
        tps += t
        num_gt += n
    if num_gt == 0 or not scores:
        return 0.0
    precision, recall = precision_recall(scores, tps, num_gt)
    return interpolated_ap(precision, recall, config.recall_positions)
