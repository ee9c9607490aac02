"""Axis-aligned voxel grid, bilinear feature sampling and the FMP1 format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FMP_MAGIC = b"FMP1"


@dataclass(frozen=True)
class VoxelGrid:
    """Grid over the detection area in the ego frame.

    Voxel ``(i, j, k)`` spans ``origin + [i, i+1) * voxel_size`` per axis and
    has linear index ``(k * ny + j) * nx + i``.
    """

    origin: tuple[float, float, float]
    voxel_size: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        size = tuple(float(v) for v in np.broadcast_to(np.asarray(self.voxel_size, dtype=float), (3,)))
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 3 or len(dims) != 3:
            raise ValueError("origin and dims need three components")
        if min(size) <= 0:
            raise ValueError("voxel_size must be positive")
        if min(dims) < 1:
            raise ValueError("dims must be >= 1 per axis")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "voxel_size", size)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_extents(cls, lower, upper, voxel_size) -> "VoxelGrid":
        lower = np.asarray(lower, dtype=float)
        size = np.broadcast_to(np.asarray(voxel_size, dtype=float), (3,))
        dims = np.rint((np.asarray(upper, dtype=float) - lower) / size).astype(int)
        return cls(tuple(lower), tuple(size), tuple(dims))

    @property
    def num_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.dims) * np.asarray(self.voxel_size)

    def linear_index(self, i, j, k):
        nx, ny, _ = self.dims
        return (np.asarray(k) * ny + np.asarray(j)) * nx + np.asarray(i)

    def unravel(self, index):
        nx, ny, _ = self.dims
        index = np.asarray(index)
        return index % nx, (index // nx) % ny, index // (nx * ny)

    def center_of(self, i, j, k) -> np.ndarray:
        ijk = np.stack(np.broadcast_arrays(i, j, k), axis=-1).astype(np.float64)
        return np.asarray(self.origin) + (ijk + 0.5) * np.asarray(self.voxel_size)

    def voxel_of(self, points):
        """Integer ``(N, 3)`` voxel coordinates and an in-grid mask.

        Boundaries follow the half-open ``[min, max)`` convention.
        """
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        ijk = np.floor((pts - self.origin) / self.voxel_size).astype(np.int64)
        inside = np.all((ijk >= 0) & (ijk < np.asarray(self.dims)), axis=1)
        return ijk, inside


def voxel_centers(grid: VoxelGrid) -> np.ndarray:
    """All voxel centers ``(N, 3)`` in linear-index order."""
    nx, ny, nz = grid.dims
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    return grid.center_of(i.ravel(), j.ravel(), k.ravel())


def check_feature_map(fmap) -> np.ndarray:
    fmap = np.asarray(fmap)
    if fmap.ndim != 3 or min(fmap.shape) < 1:
        raise ValueError(f"feature map must be (H, W, C) with positive sizes, got {fmap.shape}")
    return fmap


def _corners(size: int, coord: np.ndarray):
    lo = np.clip(np.floor(coord), 0, max(size - 2, 0)).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, coord - lo


def bilinear_sample_many(fmap, u, v):
    """Sample ``fmap`` at many pixel coordinates.

    Returns ``(samples (N, C), valid (N,))``.  Coordinates outside
    ``[0, W-1] x [0, H-1]`` give zero vectors and ``valid = False``.
    """
    fmap = check_feature_map(fmap)
    h, w, c = fmap.shape
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    out = np.zeros((u.shape[0], c), dtype=np.result_type(fmap.dtype, np.float32))
    uu, vv = u[valid], v[valid]
    u0, u1, fu = _corners(w, uu)
    v0, v1, fv = _corners(h, vv)
    fu, fv = fu[:, None], fv[:, None]
    out[valid] = (
        (1 - fv) * ((1 - fu) * fmap[v0, u0] + fu * fmap[v0, u1])
        + fv * ((1 - fu) * fmap[v1, u0] + fu * fmap[v1, u1])
    )
    return out, valid


def bilinear_sample(fmap, u: float, v: float):
    """Bilinear sample at one pixel; ``(vector (C,), valid)``."""
    out, valid = bilinear_sample_many(fmap, [u], [v])
    return out[0], bool(valid[0])


def write_feature_map(path, fmap) -> None:
    fmap = check_feature_map(fmap)
    h, w, c = fmap.shape
    with open(path, "wb") as fh:
        fh.write(FMP_MAGIC + struct.pack("<3I", h, w, c))
        fh.write(np.ascontiguousarray(fmap, dtype="<f4").tobytes())


def read_feature_map(path_or_bytes) -> np.ndarray:
    """Read an FMP1 map into a float32 ``(H, W, C)`` array."""
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    if data[:4] != FMP_MAGIC:
        raise ValueError("not an FMP1 feature map (bad magic)")
    if len(data) < 16:
        raise ValueError(f"truncated FMP1 header at byte {len(data)}")
    h, w, c = struct.unpack_from("<3I", data, 4)
    expected = 16 + 4 * h * w * c
    if len(data) != expected:
        raise ValueError(f"FMP1 payload size mismatch: expected {expected} bytes, got {len(data)}")
    return np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w, c).astype(np.float32)
