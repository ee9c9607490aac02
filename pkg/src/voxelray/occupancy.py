"""Occupancy ground truth with true negatives.

A voxel holding a lidar return is occupied.  A voxel is free only when some
beam from the sensor to a return passed through it without ending there.
Everything else is unknown, which keeps the insides and backs of objects out
of the negative set.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .geometry import PointCloud
from .voxelgrid import VoxelGrid

FREE = 0
OCCUPIED = 1
UNKNOWN = 255
OCC_MAGIC = b"OCC1"


class ZeroLengthRayError(ValueError):
    pass


@dataclass(frozen=True)
class OccupancyLabelGrid:
    grid: VoxelGrid
    labels: np.ndarray

    def counts(self) -> dict[str, int]:
        return {
            "occupied": int(np.count_nonzero(self.labels == OCCUPIED)),
            "free": int(np.count_nonzero(self.labels == FREE)),
            "unknown": int(np.count_nonzero(self.labels == UNKNOWN)),
        }

    def as_volume(self) -> np.ndarray:
        nx, ny, nz = self.grid.dims
        return self.labels.reshape(nz, ny, nx)


def _to_grid_units(grid: VoxelGrid, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    return (pts - np.asarray(grid.origin)) / np.asarray(grid.voxel_size)


def traverse_ray(grid: VoxelGrid, origin, endpoint, backend: str | None = None) -> list[int]:
    """Voxels crossed by the open segment origin -> endpoint, in order.

    The voxel containing ``endpoint`` is not included.  Segments that miss
    the grid give an empty list.
    """
    o = np.asarray(origin, dtype=np.float64)
    e = np.asarray(endpoint, dtype=np.float64)
    if np.array_equal(o, e):
        raise ZeroLengthRayError("ray origin and endpoint coincide")
    g0, g1 = _to_grid_units(grid, o), _to_grid_units(grid, e)
    return _kernels.get(backend).traverse_ray(g0.tolist(), g1.tolist(), grid.dims)


def occupied_mask(grid: VoxelGrid, cloud: PointCloud) -> np.ndarray:
    mask = np.zeros(grid.num_voxels, dtype=bool)
    ijk, inside = grid.voxel_of(cloud.points)
    ijk = ijk[inside]
    mask[grid.linear_index(ijk[:, 0], ijk[:, 1], ijk[:, 2])] = True
    return mask


def traversed_mask(grid: VoxelGrid, cloud: PointCloud, origin, *, threads: int = 1, backend: str | None = None) -> np.ndarray:
    """Voxels crossed by at least one beam (one beam per return point)."""
    g0 = _to_grid_units(grid, origin).tolist()
    ends = _to_grid_units(grid, cloud.points).reshape(-1, 3)
    keep = np.any(ends != np.asarray(g0), axis=1)
    ends = np.ascontiguousarray(ends[keep])
    kern = _kernels.get(backend)
    n = max(int(threads), 1)
    bounds = np.linspace(0, len(ends), n + 1).astype(int)
    chunks = [ends[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def run(chunk):
        buf = np.zeros(grid.num_voxels, dtype=np.uint8)
        kern.mark_rays(g0, chunk, grid.dims, buf)
        return buf

    if len(chunks) > 1:
        with ThreadPoolExecutor(len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    out = np.zeros(grid.num_voxels, dtype=bool)
    for p in parts:
        out |= p.astype(bool)
    return out


def label_occupancy(grid: VoxelGrid, cloud: PointCloud, origin=(0.0, 0.0, 0.0), *, threads: int = 1,
                    backend: str | None = None) -> OccupancyLabelGrid:
    """Ternary labels; OCCUPIED beats FREE beats UNKNOWN."""
    occ = occupied_mask(grid, cloud)
    trav = traversed_mask(grid, cloud, origin, threads=threads, backend=backend)
    labels = np.full(grid.num_voxels, UNKNOWN, dtype=np.uint8)
    labels[trav] = FREE
    labels[occ] = OCCUPIED
    return OccupancyLabelGrid(grid, labels)


def label_occupancy_naive(grid: VoxelGrid, cloud: PointCloud) -> OccupancyLabelGrid:
    """Every voxel without a point is FREE; produces false negatives."""
    labels = np.where(occupied_mask(grid, cloud), OCCUPIED, FREE).astype(np.uint8)
    return OccupancyLabelGrid(grid, labels)


def write_occupancy(path, occ: OccupancyLabelGrid) -> None:
    g = occ.grid
    with open(path, "wb") as fh:
        fh.write(OCC_MAGIC + struct.pack("<3I", *g.dims))
        fh.write(struct.pack("<3f", *g.voxel_size) + struct.pack("<3f", *g.origin))
        fh.write(np.ascontiguousarray(occ.labels, dtype=np.uint8).tobytes())


def read_occupancy(path_or_bytes) -> OccupancyLabelGrid:
    """Read an OCC1 file; grid parameters come back at float32 precision."""
    data = path_or_bytes if isinstance(path_or_bytes, bytes) else Path(path_or_bytes).read_bytes()
    if data[:4] != OCC_MAGIC:
        raise ValueError("not an OCC1 file (bad magic)")
    if len(data) < 40:
        raise ValueError(f"truncated OCC1 header at byte {len(data)}")
    dims = struct.unpack_from("<3I", data, 4)
    size = struct.unpack_from("<3f", data, 16)
    origin = struct.unpack_from("<3f", data, 28)
    grid = VoxelGrid(origin, size, dims)
    if len(data) != 40 + grid.num_voxels:
        raise ValueError(f"OCC1 payload size mismatch: expected {40 + grid.num_voxels} bytes, got {len(data)}")
    return OccupancyLabelGrid(grid, np.frombuffer(data, dtype=np.uint8, offset=40).copy())
