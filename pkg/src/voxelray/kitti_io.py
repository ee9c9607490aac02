"""Readers and writers for the KITTI file formats.

Labels live in the rectified camera frame with ``location`` at the bottom
center of the box.  :func:`label_to_box` and :func:`box_to_label` convert to
and from center-based ego-frame boxes; the half-height shift happens only in
:func:`_bottom_to_center` and its inverse.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .geometry import Box3D, CameraRig, PointCloud, camera_to_ego, ego_to_camera, wrap_angle

LABEL_FIELDS = (
    "type", "truncated", "occluded", "alpha",
    "bbox_left", "bbox_top", "bbox_right", "bbox_bottom",
    "height", "width", "length", "x", "y", "z", "rotation_y",
)
_MATRIX_SHAPES = {"P0": (3, 4), "P1": (3, 4), "P2": (3, 4), "P3": (3, 4),
                  "R0_rect": (3, 3), "Tr_velo_to_cam": (3, 4), "Tr_imu_to_velo": (3, 4)}
_REQUIRED = ("P2", "P3", "R0_rect", "Tr_velo_to_cam")


class KittiFormatError(ValueError):
    pass


@dataclass(frozen=True)
class KittiCalibration:
    P2: np.ndarray
    P3: np.ndarray
    R0_rect: np.ndarray
    Tr_velo_to_cam: np.ndarray
    extra: dict = field(default_factory=dict)

    def matrices(self) -> dict:
        out = {"P2": self.P2, "P3": self.P3, "R0_rect": self.R0_rect, "Tr_velo_to_cam": self.Tr_velo_to_cam}
        out.update(self.extra)
        return out


@dataclass(frozen=True)
class KittiLabel:
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # h, w, l
    location: tuple[float, float, float]
    rotation_y: float
    score: float | None = None

    @property
    def bbox_height(self) -> float:
        return self.bbox[3] - self.bbox[1]


# --------------------------------------------------------------------------
# calibration

def parse_calibration(text: str) -> KittiCalibration:
    mats = {}
    order = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep or not key:
            raise KittiFormatError(f"line {lineno}: expected 'KEY: values'")
        try:
            vals = [float(tok) for tok in rest.split()]
        except ValueError as exc:
            raise KittiFormatError(f"line {lineno}: field '{key}': {exc}") from None
        shape = _MATRIX_SHAPES.get(key)
        if shape is not None and len(vals) != shape[0] * shape[1]:
            raise KittiFormatError(f"line {lineno}: field '{key}': expected {shape[0] * shape[1]} values, got {len(vals)}")
        mats[key] = np.array(vals).reshape(shape) if shape else np.array(vals)
        order.append(key)
    missing = [k for k in _REQUIRED if k not in mats]
    if missing:
        raise KittiFormatError(f"calibration missing matrix keys: {', '.join(missing)}")
    extra = {k: mats[k] for k in order if k not in _REQUIRED}
    r0 = mats["R0_rect"]
    if not np.allclose(r0 @ r0.T, np.eye(3), atol=1e-4):
        raise KittiFormatError("field 'R0_rect': rectification is not orthonormal")
    return KittiCalibration(mats["P2"], mats["P3"], r0, mats["Tr_velo_to_cam"], extra)


def format_calibration(calib: KittiCalibration) -> str:
    keys = ["P0", "P1", "P2", "P3", "R0_rect", "Tr_velo_to_cam", "Tr_imu_to_velo"]
    mats = calib.matrices()
    ordered = [k for k in keys if k in mats] + [k for k in mats if k not in keys]
    return "".join(f"{k}: {' '.join(repr(float(v)) for v in np.ravel(mats[k]))}\n" for k in ordered)


def rig_from_calibration(calib: KittiCalibration, camera: str = "left", image_size=None) -> CameraRig:
    """Rig mapping velodyne points into the rectified camera."""
    if camera not in ("left", "right"):
        raise ValueError("camera must be 'left' or 'right'")
    ext = np.eye(4)
    ext[:3, :3] = calib.R0_rect @ calib.Tr_velo_to_cam[:, :3]
    ext[:3, 3] = calib.R0_rect @ calib.Tr_velo_to_cam[:, 3]
    p = calib.P2 if camera == "left" else calib.P3
    return CameraRig(intrinsic=p, extrinsic=ext, image_size=image_size)


def calibration_from_rig(calib: KittiCalibration, rig: CameraRig, camera: str = "left") -> KittiCalibration:
    """Write a rig's extrinsic (and intrinsic) back into calibration form."""
    tr = np.linalg.solve(calib.R0_rect, rig.extrinsic[:3, :])
    key = "P2" if camera == "left" else "P3"
    return replace(calib, Tr_velo_to_cam=tr, **{key: np.array(rig.intrinsic)})


# --------------------------------------------------------------------------
# labels

def _parse_field(tok: str, name: str, lineno: int, cast=float):
    try:
        return cast(tok)
    except ValueError:
        raise KittiFormatError(f"line {lineno}: field '{name}': cannot parse {tok!r}") from None


def parse_labels(text: str) -> list[KittiLabel]:
    """Parse label lines (15 fields, or 16 with a trailing detection score)."""
    labels = []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        if len(toks) not in (15, 16):
            raise KittiFormatError(f"line {lineno}: expected 15 or 16 fields, got {len(toks)}")
        f = [toks[0]] + [_parse_field(t, n, lineno) for t, n in zip(toks[1:15], LABEL_FIELDS[1:])]
        occ = _parse_field(toks[2], "occluded", lineno, int)
        score = _parse_field(toks[15], "score", lineno) if len(toks) == 16 else None
        h, w, l = f[8:11]
        if toks[0] != "DontCare" and min(h, w, l) <= 0:
            raise KittiFormatError(f"line {lineno}: field 'dimensions': must be positive")
        labels.append(KittiLabel(f[0], f[1], occ, f[3], tuple(f[4:8]), (h, w, l), tuple(f[11:14]), f[14], score))
    return labels


def format_labels(labels: Sequence[KittiLabel]) -> str:
    lines = []
    for lb in labels:
        vals = [lb.truncated, lb.occluded, lb.alpha, *lb.bbox, *lb.dimensions, *lb.location, lb.rotation_y]
        toks = [lb.type] + [str(v) if isinstance(v, int) else repr(float(v)) for v in vals]
        if lb.score is not None:
            toks.append(repr(float(lb.score)))
        lines.append(" ".join(toks) + "\n")
    return "".join(lines)


def _bottom_to_center(location, height: float) -> np.ndarray:
    """Camera y points down, so the center sits half a height above the bottom."""
    x, y, z = location
    return np.array([x, y - height / 2.0, z])


def _center_to_bottom(center, height: float) -> tuple[float, float, float]:
    x, y, z = center
    return (float(x), float(y + height / 2.0), float(z))


def label_to_box(label: KittiLabel, rig: CameraRig) -> Box3D:
    """Ego-frame box for a camera-frame label."""
    h, w, l = label.dimensions
    center = camera_to_ego(rig, _bottom_to_center(label.location, h))
    ry = label.rotation_y
    heading_cam = np.array([math.cos(ry), 0.0, -math.sin(ry)])
    heading = np.linalg.solve(rig.rotation, heading_cam)
    yaw = math.atan2(heading[1], heading[0])
    return Box3D(*(float(v) for v in center), l, w, h, yaw)


def box_to_label(box: Box3D, rig: CameraRig, template: KittiLabel | None = None) -> KittiLabel:
    """Camera-frame label for an ego box; non-geometric fields from ``template``."""
    center = ego_to_camera(rig, box.center)
    # heading inside the camera x-z plane that projects onto the box yaw,
    # so this inverts label_to_box even when the camera is tilted
    forward = np.array([math.cos(box.yaw), math.sin(box.yaw), 0.0])
    normal = np.linalg.solve(rig.rotation.T, [-forward[1], forward[0], 0.0])
    heading = np.cross([0.0, 1.0, 0.0], normal)
    if np.linalg.norm(heading) < 1e-12:
        heading = rig.rotation @ forward
    elif (rig.rotation.T @ heading) @ forward < 0:
        heading = -heading
    ry = wrap_angle(math.atan2(-heading[2], heading[0]))
    loc = _center_to_bottom(center, box.height)
    if template is None:
        template = KittiLabel("Car", 0.0, 0, 0.0, (0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 0.0)
    return replace(template, dimensions=(box.height, box.width, box.length), location=loc, rotation_y=ry)


def label_to_eval_box(label: KittiLabel) -> Box3D:
    """Ego-like box straight from camera coordinates, for overlap scoring.

    Uses the fixed axis permutation (x, y, z)_ego = (z, -x, -y)_cam, a proper
    rotation, so IoUs equal those of the calibrated conversion.
    """
    h, w, l = label.dimensions
    x, y, z = _bottom_to_center(label.location, h)
    return Box3D(z, -x, -y, l, w, h, -label.rotation_y - math.pi / 2)


# --------------------------------------------------------------------------
# point clouds

def read_point_cloud(data: bytes) -> PointCloud:
    """Velodyne ``.bin`` contents: little-endian float32 (x, y, z, reflectance)."""
    if len(data) % 16:
        last = len(data) - len(data) % 16
        raise KittiFormatError(f"truncated point record at byte offset {last} ({len(data) - last} trailing bytes)")
    arr = np.frombuffer(data, dtype="<f4").reshape(-1, 4).astype(np.float64)
    if not np.isfinite(arr).all():
        bad = int(np.argwhere(~np.isfinite(arr))[0][0])
        raise KittiFormatError(f"non-finite value in point record at byte offset {bad * 16}")
    return PointCloud(arr[:, :3], arr[:, 3])


def write_point_cloud(cloud: PointCloud) -> bytes:
    inten = cloud.intensity if cloud.intensity is not None else np.zeros(len(cloud))
    arr = np.column_stack([cloud.points, inten]).astype("<f4")
    return arr.tobytes()
