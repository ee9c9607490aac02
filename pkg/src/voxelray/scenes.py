"""Synthetic rigs and scenes shared by checks and benchmarks."""
from __future__ import annotations

import math

import numpy as np

from .encoding import GaussianEncoder, encode
from .geometry import Box3D, CameraRig, PointCloud, rot_z
from .voxelgrid import VoxelGrid

# ego (x fwd, y left, z up) -> camera (x right, y down, z fwd)
EGO_TO_CAMERA_AXES = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def mounted_rig(yaw: float = 0.0, pitch: float = 0.0, roll: float = 0.0, position=(0.27, 0.0, -0.08),
                focal: float = 720.0, image_size=(352, 1248), baseline_px: float = 0.0) -> CameraRig:
    """Forward camera whose optical axis has heading ``yaw`` in the ego frame."""
    mount = rot_z(yaw) @ _rot_y(pitch) @ _rot_x(roll)
    rot = EGO_TO_CAMERA_AXES @ mount.T
    ext = np.eye(4)
    ext[:3, :3] = rot
    ext[:3, 3] = -rot @ np.asarray(position, dtype=float)
    h, w = image_size
    p = np.array([[focal, 0.0, (w - 1) / 2 + 3.1, baseline_px],
                  [0.0, focal, (h - 1) / 2 - 2.7, 0.0],
                  [0.0, 0.0, 1.0, 0.0]])
    return CameraRig(p, ext, image_size=image_size)


def random_rig(rng: np.random.Generator, image_size=(352, 1248)) -> CameraRig:
    return mounted_rig(
        yaw=rng.uniform(-math.pi, math.pi),
        pitch=rng.uniform(-0.2, 0.2),
        roll=rng.uniform(-0.1, 0.1),
        position=rng.uniform([-2, -1, -0.5], [2, 1, 2]),
        focal=rng.uniform(300, 900),
        image_size=image_size,
        baseline_px=rng.uniform(-400, 400),
    )


def random_boxes(rng: np.random.Generator, n: int) -> list[Box3D]:
    return [
        Box3D(*rng.uniform([-40, -40, -2], [40, 40, 1]), *rng.uniform([0.5, 0.5, 0.5], [5, 3, 3]),
              rng.uniform(-math.pi, math.pi))
        for _ in range(n)
    ]


def random_cloud(rng: np.random.Generator, n: int) -> PointCloud:
    return PointCloud(rng.uniform([-50, -50, -3], [50, 50, 3], size=(n, 3)), rng.uniform(0, 1, n))


def occluder_scene():
    """Single-slice scene of a beam blocked by an object.

    Returns ``(grid, cloud, sensor, box, behind)`` where ``behind`` lists the
    linear indices of voxels inside and behind the object that no beam
    reaches.
    """
    grid = VoxelGrid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0), (10, 5, 1))
    sensor = (0.5, 2.5, 0.5)
    box = Box3D(6.5, 2.5, 0.5, 3.0, 3.0, 1.0, 0.0)
    front = [(5.05, y, 0.5) for y in (1.2, 1.5, 2.0, 2.5, 3.0, 3.5, 3.8)]
    sides = [(4.5, 0.5, 0.5), (4.5, 4.5, 0.5), (3.5, 0.2, 0.5), (3.5, 4.8, 0.5)]
    cloud = PointCloud(np.array(front + sides))
    behind = [int(grid.linear_index(i, j, 0)) for i in range(6, 10) for j in (1, 2, 3)]
    return grid, cloud, sensor, box, behind


def constant_key_map(encoder: GaussianEncoder, z_star: float, height: int, width: int) -> np.ndarray:
    """Depth keys equal to ``encode(z_star)`` at every pixel."""
    return np.broadcast_to(encode(encoder, z_star), (height, width, encoder.n)).copy()


def single_voxel_at_depth(rig: CameraRig, depth: float, pixel=(10.0, 8.0), size: float = 0.2) -> VoxelGrid:
    """One-voxel grid whose center projects to ``pixel`` at camera ``depth``."""
    from .geometry import back_project

    center = back_project(rig, [pixel], [depth])[0]
    return VoxelGrid(tuple(center - size / 2), (size, size, size), (1, 1, 1))
