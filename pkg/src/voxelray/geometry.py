"""Camera rig algebra in the ego (KITTI lidar) frame.

Conventions
-----------
* Ego frame: x forward, y left, z up (the KITTI velodyne frame).
* ``extrinsic`` is a 4x4 transform taking ego-frame points to the camera
  frame (x right, y down, z along the optical axis).
* ``intrinsic`` is a 3x4 projection matrix in pixels.  Pixel ``(0, 0)`` is the
  center of the top-left pixel.
* Angles are radians and wrapped to ``(-pi, pi]`` by :func:`wrap_angle`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

EPS_DEPTH = 1e-3
TWO_PI = 2.0 * math.pi


class DegenerateOrientationError(ValueError):
    """The optical axis is parallel to the ego up-axis, so it has no heading."""


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to ``(-pi, pi]``.

    Values already inside the range are returned unchanged, bit for bit.
    """
    if np.ndim(angle) == 0:
        r = math.remainder(float(angle), TWO_PI)
        return math.pi if r <= -math.pi else r
    a = np.asarray(angle, dtype=np.float64)
    r = np.remainder(a + math.pi, TWO_PI) - math.pi
    r = np.where((a > -math.pi) & (a <= math.pi), a, r)
    return np.where(r <= -math.pi, math.pi, r)


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def rot_z(theta: float) -> np.ndarray:
    """3x3 rotation about the ego up-axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraRig:
    """Pinhole camera mounted on the ego vehicle.

    ``image_size`` is ``(height, width)`` in pixels, or ``None`` when bounds
    checks are not wanted.  ``handedness`` is ``-1`` after an odd number of
    world flips, when the extrinsic rotation block carries a reflection.
    """

    intrinsic: np.ndarray
    extrinsic: np.ndarray
    image_size: tuple[int, int] | None = None
    handedness: int = 1

    def __post_init__(self):
        object.__setattr__(self, "intrinsic", _frozen(self.intrinsic, (3, 4)))
        object.__setattr__(self, "extrinsic", _frozen(self.extrinsic, (4, 4)))
        if self.intrinsic[0, 0] == 0.0 or self.intrinsic[1, 1] == 0.0:
            raise ValueError("intrinsic focal terms must be nonzero")
        if self.handedness not in (1, -1):
            raise ValueError("handedness must be +1 or -1")
        if self.image_size is not None:
            h, w = (int(x) for x in self.image_size)
            if h < 1 or w < 1:
                raise ValueError("image_size must be positive")
            object.__setattr__(self, "image_size", (h, w))

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsic[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsic[:3, 3]

    def check(self, tol: float = 1e-6) -> None:
        """Raise ``ValueError`` unless the rotation block is orthonormal with
        determinant equal to ``handedness``."""
        r = self.rotation
        if not np.allclose(r @ r.T, np.eye(3), atol=tol):
            raise ValueError("extrinsic rotation block is not orthonormal")
        if abs(np.linalg.det(r) - self.handedness) > tol:
            raise ValueError("extrinsic determinant does not match handedness")
        if not np.array_equal(self.extrinsic[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("extrinsic last row must be (0, 0, 0, 1)")

    def rescaled(self, sx: float, sy: float | None = None) -> "CameraRig":
        """Rig for an image resampled by factors ``sx``, ``sy`` (new/old).

        Uses the pixel-center convention, so ``u' = (u + 0.5) * sx - 0.5``.
        """
        sy = sx if sy is None else sy
        a = np.array([[sx, 0.0, 0.5 * sx - 0.5], [0.0, sy, 0.5 * sy - 0.5], [0.0, 0.0, 1.0]])
        size = None
        if self.image_size is not None:
            size = (round(self.image_size[0] * sy), round(self.image_size[1] * sx))
        return replace(self, intrinsic=a @ self.intrinsic, image_size=size)


@dataclass(frozen=True)
class Box3D:
    """Yaw-only box in the ego frame; ``center`` is the geometric center."""

    x: float
    y: float
    z: float
    length: float
    width: float
    height: float
    yaw: float

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.length, self.width, self.height, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("box fields must be finite")
        if min(self.length, self.width, self.height) <= 0:
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def corners_bev(self) -> np.ndarray:
        """Footprint corners (4, 2), counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + [self.x, self.y]


@dataclass(frozen=True)
class PointCloud:
    """Ego-frame points ``(N, 3)`` with optional reflectance ``(N,)`` in [0, 1]."""

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.array(self.intensity, dtype=np.float64).reshape(-1)
            if inten.shape[0] != pts.shape[0]:
                raise ValueError("intensity length must match point count")
            inten.setflags(write=False)
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.points.shape[0]


def orientation_delta(rig: CameraRig) -> float:
    """Heading of the optical axis in the ego ground plane.

    Row 3 of the extrinsic rotation is the camera z-axis written in ego
    coordinates; its (x, y) part is the projection onto the ground plane.
    """
    t31, t32 = rig.extrinsic[2, 0], rig.extrinsic[2, 1]
    if t31 == 0.0 and t32 == 0.0:
        raise DegenerateOrientationError("camera optical axis is parallel to the ego up-axis")
    return wrap_angle(math.atan2(t32, t31))


def _rotate_boxes(boxes: Sequence[Box3D], rot: np.ndarray, dyaw: float) -> list[Box3D]:
    out = []
    for b in boxes:
        cx, cy, cz = rot @ b.center
        out.append(replace(b, x=float(cx), y=float(cy), z=float(cz), yaw=wrap_angle(b.yaw + dyaw)))
    return out


def apply_world_rotation(rig: CameraRig, boxes: Sequence[Box3D], cloud: PointCloud, theta: float):
    """Rotate the world about the ego up-axis and compensate the extrinsic.

    Returns ``(rig, boxes, cloud)`` with ``T <- T R^-1`` so that camera-frame
    coordinates of every physical point are unchanged.
    """
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    rot = rot_z(theta)
    inv = np.eye(4)
    inv[:3, :3] = rot.T
    new_rig = replace(rig, extrinsic=rig.extrinsic @ inv)
    new_cloud = replace(cloud, points=cloud.points @ rot.T)
    return new_rig, _rotate_boxes(boxes, rot, theta), new_cloud


def apply_world_flip(rig: CameraRig, boxes: Sequence[Box3D], cloud: PointCloud):
    """Mirror the world across the ego x-z plane.

    The second column of the extrinsic rotation block is negated.  The
    returned flag is always ``True``: the caller must mirror the image
    horizontally and replace the intrinsic with :func:`mirror_intrinsic`.
    """
    ext = np.array(rig.extrinsic)
    ext[:3, 1] = -ext[:3, 1]
    new_rig = replace(rig, extrinsic=ext, handedness=-rig.handedness)
    pts = np.array(cloud.points)
    pts[:, 1] = -pts[:, 1]
    new_boxes = [replace(b, y=-b.y, yaw=wrap_angle(-b.yaw)) for b in boxes]
    return new_rig, new_boxes, replace(cloud, points=pts), True


def mirror_intrinsic(rig: CameraRig, image_width: int | None = None) -> CameraRig:
    """Intrinsic for the horizontally mirrored image, ``u' = W - 1 - u``.

    For a plain pinhole this turns ``fx`` into ``-fx`` and ``cx`` into
    ``W - 1 - cx``; the general form is ``P' = M P`` with
    ``M = [[-1, 0, W - 1], [0, 1, 0], [0, 0, 1]]``.
    """
    if image_width is None:
        if rig.image_size is None:
            raise ValueError("image width unknown")
        image_width = rig.image_size[1]
    p = np.array(rig.intrinsic)
    p[0] = (image_width - 1) * p[2] - p[0]
    return replace(rig, intrinsic=p)


def ego_to_camera(rig: CameraRig, points) -> np.ndarray:
    """Transform ego-frame points ``(..., 3)`` into the camera frame."""
    pts = np.asarray(points, dtype=np.float64)
    return pts @ rig.rotation.T + rig.translation


def camera_to_ego(rig: CameraRig, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64) - rig.translation
    return np.linalg.solve(rig.rotation, pts.reshape(-1, 3).T).T.reshape(pts.shape)


def project_to_image(rig: CameraRig, camera_points, image_size=None):
    """Pinhole projection of camera-frame points.

    Returns ``(uv, depth, valid)`` with ``uv`` of shape ``(N, 2)``.  A point is
    invalid when its camera depth is at most ``EPS_DEPTH`` or, if an image
    size is known, when ``(u, v)`` falls outside ``[0, W-1] x [0, H-1]``.
    Invalid entries carry unspecified pixel values.
    """
    pts = np.asarray(camera_points, dtype=np.float64).reshape(-1, 3)
    p = rig.intrinsic
    hom = pts @ p[:, :3].T + p[:, 3]
    depth = pts[:, 2]
    w = hom[:, 2]
    valid = (depth > EPS_DEPTH) & (w > EPS_DEPTH)
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = hom[:, :2] / np.where(valid, w, 1.0)[:, None]
    size = rig.image_size if image_size is None else image_size
    if size is not None:
        h, wd = size
        valid &= (uv[:, 0] >= 0) & (uv[:, 0] <= wd - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= h - 1)
    return uv, depth, valid


def back_project(rig: CameraRig, uv, depth) -> np.ndarray:
    """Recover ego-frame points from pixel coordinates and camera depth."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    depth = np.asarray(depth, dtype=np.float64).reshape(-1)
    p = rig.intrinsic
    out = np.empty((uv.shape[0], 3))
    # unknowns (X, Y, w) with Z fixed:  P[:, :3] @ (X, Y, Z) + P[:, 3] = w (u, v, 1)
    for n, ((u, v), z) in enumerate(zip(uv, depth)):
        a = np.column_stack([p[:, 0], p[:, 1], -np.array([u, v, 1.0])])
        b = -(p[:, 2] * z + p[:, 3])
        x, y, _ = np.linalg.solve(a, b)
        out[n] = (x, y, z)
    return camera_to_ego(rig, out)
