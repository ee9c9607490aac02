"""Local ray attention: lift image features into a voxel grid.

Every voxel center is moved to the camera frame and projected.  Its camera
depth is encoded as the query, the depth keys and image values are sampled
bilinearly at the projected pixel, and the voxel receives
``dot(key, query) * value``.  There is no normalization along the ray unless
``normalize="softmax"`` is requested.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .encoding import GaussianEncoder, encode
from .geometry import CameraRig, ego_to_camera, project_to_image
from .voxelgrid import VoxelGrid, bilinear_sample_many, check_feature_map, voxel_centers

VXF_MAGIC = b"VXF1"


@dataclass(frozen=True)
class RayQueries:
    """Per-voxel query data in linear-index order."""

    depth: np.ndarray
    uv: np.ndarray
    valid: np.ndarray
    encoder: GaussianEncoder

    def __len__(self) -> int:
        return self.depth.shape[0]

    def encoding(self, index: int) -> np.ndarray:
        return encode(self.encoder, self.depth[index])

    def encodings(self) -> np.ndarray:
        """All encodings ``(N, n)``; invalid voxels get zero rows."""
        out = np.zeros((len(self), self.encoder.n))
        out[self.valid] = encode(self.encoder, self.depth[self.valid])
        return out


@dataclass(frozen=True)
class VoxelFeatures:
    grid: VoxelGrid
    values: np.ndarray
    weights: np.ndarray
    valid: np.ndarray

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def as_volume(self) -> np.ndarray:
        """Values reshaped to ``(nz, ny, nx, C)``."""
        nx, ny, nz = self.grid.dims
        return self.values.reshape(nz, ny, nx, -1)


def build_queries(grid: VoxelGrid, rig: CameraRig, query_encoder: GaussianEncoder, image_size=None) -> RayQueries:
    """Project all voxel centers; flag those behind the camera or off-image."""
    cam = ego_to_camera(rig, voxel_centers(grid))
    uv, depth, valid = project_to_image(rig, cam, image_size=image_size)
    uv = np.where(valid[:, None], uv, 0.0)
    return RayQueries(depth=depth, uv=uv, valid=valid, encoder=query_encoder)


def _softmax_groups(weights: np.ndarray, valid: np.ndarray, uv: np.ndarray) -> np.ndarray:
    # voxels sharing a rounded pixel form one ray
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        return np.zeros_like(weights)
    pix = np.rint(uv[idx]).astype(np.int64)
    _, group = np.unique(pix, axis=0, return_inverse=True)
    group = group.reshape(-1)
    w = weights[idx]
    gmax = np.full(group.max() + 1, -np.inf)
    np.maximum.at(gmax, group, w)
    e = np.exp(w - gmax[group])
    total = np.zeros_like(gmax)
    np.add.at(total, group, e)
    out = np.zeros_like(weights)
    out[idx] = e / total[group]
    return out


def local_ray_attention(
    depth_keys,
    image_values,
    grid: VoxelGrid,
    rig: CameraRig,
    query_encoder: GaussianEncoder,
    *,
    normalize: str | None = None,
    threads: int = 1,
    backend: str | None = None,
) -> VoxelFeatures:
    """Populate voxels with similarity-weighted image values.

    ``rig`` must project into feature-map pixels (see
    :meth:`CameraRig.rescaled`).  The output dtype follows ``image_values``
    (float32 or float64).
    """
    keys = check_feature_map(depth_keys)
    values = check_feature_map(image_values)
    if keys.shape[2] != query_encoder.n:
        raise ValueError(f"depth keys have {keys.shape[2]} channels, encoder expects {query_encoder.n}")
    if keys.shape[:2] != values.shape[:2]:
        raise ValueError("depth keys and image values must share H and W")
    if normalize not in (None, "softmax"):
        raise ValueError(f"unknown normalization {normalize!r}")
    h, w, _ = keys.shape
    q = build_queries(grid, rig, query_encoder, image_size=(h, w))
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    vdtype = np.float32 if values.dtype == np.float32 else np.float64
    values = np.ascontiguousarray(values, dtype=vdtype)

    num = len(q)
    out = np.empty((num, values.shape[2]), dtype=vdtype)
    weights = np.empty(num)
    valid = q.valid.astype(np.uint8)
    uv = np.ascontiguousarray(q.uv)
    depth = np.ascontiguousarray(q.depth)
    enc = query_encoder
    args = (1.0 / (enc.sigma * enc.sigma), enc.coefficient)
    kern = _kernels.get(backend)

    def run(sl):
        kern.ray_attention(keys, values, uv[sl], depth[sl], valid[sl], enc.grid, *args, out[sl], weights[sl])

    bounds = np.linspace(0, num, max(int(threads), 1) + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if len(slices) > 1:
        with ThreadPoolExecutor(len(slices)) as pool:
            list(pool.map(run, slices))
    else:
        for sl in slices:
            run(sl)

    valid = valid.astype(bool)
    if normalize == "softmax":
        weights = _softmax_groups(weights, valid, uv)
        sampled, _ = bilinear_sample_many(values, uv[valid, 0], uv[valid, 1])
        out[:] = 0
        out[valid] = weights[valid, None] * sampled
    return VoxelFeatures(grid=grid, values=out, weights=weights, valid=valid)


def make_orientation_aware_values(image_features, delta: float, orientation_encoder: GaussianEncoder) -> np.ndarray:
    """Append the encoded orientation delta to every pixel's channels."""
    feats = check_feature_map(image_features)
    p = encode(orientation_encoder, delta)
    h, w, _ = feats.shape
    tiled = np.broadcast_to(p.astype(feats.dtype, copy=False), (h, w, p.shape[0]))
    return np.concatenate([feats, tiled], axis=2)


def write_voxel_features(path, feats: VoxelFeatures) -> None:
    nx, ny, nz = feats.grid.dims
    with open(path, "wb") as fh:
        fh.write(VXF_MAGIC + struct.pack("<4I", nx, ny, nz, feats.channels))
        fh.write(np.ascontiguousarray(feats.values, dtype="<f4").tobytes())


def read_voxel_features(path_or_bytes):
    """Return ``(dims, values (N, C) float32)`` from a VXF1 file."""
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    if data[:4] != VXF_MAGIC:
        raise ValueError("not a VXF1 file (bad magic)")
    if len(data) < 20:
        raise ValueError(f"truncated VXF1 header at byte {len(data)}")
    nx, ny, nz, c = struct.unpack_from("<4I", data, 4)
    expected = 20 + 4 * nx * ny * nz * c
    if len(data) != expected:
        raise ValueError(f"VXF1 payload size mismatch: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=20).reshape(nx * ny * nz, c).astype(np.float32)
    return (nx, ny, nz), values
