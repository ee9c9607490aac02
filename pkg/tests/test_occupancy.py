import numpy as np
import pytest

from voxelray import scenes
from voxelray.geometry import PointCloud
from voxelray.occupancy import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    ZeroLengthRayError,
    label_occupancy,
    label_occupancy_naive,
    read_occupancy,
    traverse_ray,
    write_occupancy,
)
from voxelray.oracles import brute_force_traversed, dense_sample_voxels, voxel_chord
from voxelray.voxelgrid import VoxelGrid

LINE = VoxelGrid((0, 0, 0), 1.0, (4, 1, 1))
CUBE = VoxelGrid((0, 0, 0), 1.0, (32, 32, 32))


class TestTraversal:
    def test_axis_aligned(self, backend):
        assert traverse_ray(LINE, (0.5, 0.5, 0.5), (3.5, 0.5, 0.5), backend) == [0, 1, 2]

    def test_reverse(self, backend):
        assert traverse_ray(LINE, (3.5, 0.5, 0.5), (0.5, 0.5, 0.5), backend) == [3, 2, 1]

    def test_starts_outside(self, backend):
        assert traverse_ray(LINE, (-5, 0.5, 0.5), (2.5, 0.5, 0.5), backend) == [0, 1]

    def test_misses_grid(self, backend):
        assert traverse_ray(LINE, (0.5, 3, 0.5), (3.5, 3, 0.5), backend) == []

    def test_endpoint_outside(self, backend):
        assert traverse_ray(LINE, (1.5, 0.5, 0.5), (9, 0.5, 0.5), backend) == [1, 2, 3]

    def test_same_voxel(self, backend):
        assert traverse_ray(LINE, (0.2, 0.5, 0.5), (0.8, 0.5, 0.5), backend) == []

    def test_zero_length(self, backend):
        with pytest.raises(ZeroLengthRayError):
            traverse_ray(LINE, (0.5, 0.5, 0.5), (0.5, 0.5, 0.5), backend)

    def test_exact_diagonal_corner(self, backend):
        g = VoxelGrid((0, 0, 0), 1.0, (3, 3, 1))
        path = traverse_ray(g, (0.5, 0.5, 0.5), (2.5, 2.5, 0.5), backend)
        assert path[0] == 0
        # every visited voxel must hold a positive chord except pure corner touches
        assert g.linear_index(1, 1, 0) in path
        assert 8 not in path

    def test_ordered_and_face_adjacent(self, backend, rng):
        for _ in range(200):
            p0, p1 = rng.uniform(-4, 36, (2, 3))
            path = traverse_ray(CUBE, p0, p1, backend)
            assert len(set(path)) == len(path)
            ijk = np.array(CUBE.unravel(np.array(path, dtype=int))).T
            if len(ijk) > 1:
                assert (np.abs(np.diff(ijk, axis=0)).sum(axis=1) == 1).all()

    def test_matches_dense_oracle(self, backend, rng):
        for _ in range(300):
            p0, p1 = rng.uniform(0, 32, (2, 3))
            assert set(traverse_ray(CUBE, p0, p1, backend)) == dense_sample_voxels(CUBE, p0, p1)

    def test_positive_chord(self, backend, rng):
        for _ in range(50):
            p0, p1 = rng.uniform(0, 32, (2, 3))
            for v in traverse_ray(CUBE, p0, p1, backend):
                assert voxel_chord(CUBE, v, p0, p1) > 0

    def test_backends_agree(self, rng):
        pytest.importorskip("voxelray._core")
        g = VoxelGrid((-1.3, 2.0, 0.1), (0.4, 0.3, 0.5), (40, 50, 12))
        for _ in range(500):
            p0, p1 = rng.uniform(-5, 25, (2, 3))
            assert traverse_ray(g, p0, p1, "python") == traverse_ray(g, p0, p1, "cython")


class TestLabels:
    def test_occluder_scene(self, backend):
        grid, cloud, sensor, _, behind = scenes.occluder_scene()
        occ = label_occupancy(grid, cloud, sensor, backend=backend)
        assert (occ.labels[behind] == UNKNOWN).all()
        naive = label_occupancy_naive(grid, cloud)
        assert (naive.labels[behind] == FREE).all()
        assert occ.labels[grid.linear_index(2, 2, 0)] == FREE
        assert occ.labels[grid.linear_index(5, 2, 0)] == OCCUPIED

    def test_occupied_wins(self, backend):
        # a return inside the path of another beam stays occupied
        cloud = PointCloud([[1.5, 0.5, 0.5], [3.5, 0.5, 0.5]])
        occ = label_occupancy(LINE, cloud, (0.5, 0.5, 0.5), backend=backend)
        assert occ.labels.tolist() == [FREE, OCCUPIED, FREE, OCCUPIED]

    def test_empty_cloud(self, backend):
        occ = label_occupancy(LINE, PointCloud(np.zeros((0, 3))), (0.5, 0.5, 0.5), backend=backend)
        assert (occ.labels == UNKNOWN).all()

    def test_point_at_sensor_skipped(self, backend):
        occ = label_occupancy(LINE, PointCloud([[0.5, 0.5, 0.5]]), (0.5, 0.5, 0.5), backend=backend)
        assert occ.labels.tolist() == [OCCUPIED, UNKNOWN, UNKNOWN, UNKNOWN]

    def test_against_brute_force(self, backend, rng):
        g = VoxelGrid((-10, -10, -2), 0.5, (40, 40, 8))
        for _ in range(3):
            pts = rng.uniform([-12, -12, -3], [12, 12, 3], (2000, 3))
            occ = label_occupancy(g, PointCloud(pts), (0.1, 0.2, 0.3), backend=backend)
            trav = brute_force_traversed(g, (0.1, 0.2, 0.3), pts)
            mine = occ.labels != UNKNOWN
            occupied = occ.labels == OCCUPIED
            np.testing.assert_array_equal(mine & ~occupied, trav & ~occupied)

    @pytest.mark.parametrize("threads", [2, 3, 8])
    def test_threads_identical(self, backend, rng, threads):
        grid = VoxelGrid((0, -40, -3), 0.4, (176, 200, 16))
        cloud = PointCloud(rng.uniform([0, -40, -3], [70, 40, 3], (5000, 3)))
        a = label_occupancy(grid, cloud, threads=1, backend=backend)
        b = label_occupancy(grid, cloud, threads=threads, backend=backend)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_counts(self):
        occ = label_occupancy(LINE, PointCloud([[2.5, 0.5, 0.5]]), (0.5, 0.5, 0.5))
        assert occ.counts() == {"occupied": 1, "free": 2, "unknown": 1}


class TestOccFile:
    def test_roundtrip(self, tmp_path, rng):
        grid = VoxelGrid((0.0, -40.0, -3.0), 0.5, (8, 6, 4))
        labels = rng.choice([FREE, OCCUPIED, UNKNOWN], grid.num_voxels).astype(np.uint8)
        from voxelray.occupancy import OccupancyLabelGrid
        write_occupancy(tmp_path / "o.occ", OccupancyLabelGrid(grid, labels))
        back = read_occupancy(tmp_path / "o.occ")
        assert back.grid == grid
        np.testing.assert_array_equal(back.labels, labels)
        assert (tmp_path / "o.occ").stat().st_size == 40 + grid.num_voxels

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="magic"):
            read_occupancy(b"NOPE" + bytes(36))

    def test_truncated(self, tmp_path):
        from voxelray.occupancy import OccupancyLabelGrid
        write_occupancy(tmp_path / "o.occ", OccupancyLabelGrid(LINE, np.zeros(4, np.uint8)))
        with pytest.raises(ValueError, match="size mismatch"):
            read_occupancy((tmp_path / "o.occ").read_bytes()[:-1])
