"""Compare the compiled and Python kernels on the reference workloads.

    python3 benchmarks/bench_backends.py [--rays 100000] [--channels 64] [--repeat 3]
"""
import argparse
import time

import numpy as np

from voxelray import _kernels, scenes
from voxelray.attention import local_ray_attention
from voxelray.encoding import QUERY_ENCODER
from voxelray.geometry import PointCloud
from voxelray.occupancy import label_occupancy
from voxelray.voxelgrid import VoxelGrid


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int, default=100_000)
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    grid = VoxelGrid((0.0, -40.0, -3.0), 0.4, (176, 200, 16))
    n = args.rays
    cloud = PointCloud(np.column_stack([rng.uniform(0, 70.4, n), rng.uniform(-40, 40, n), rng.uniform(-3, 3.4, n)]))
    rig = scenes.mounted_rig().rescaled(0.25)
    h, w = rig.image_size
    keys = rng.uniform(0, 0.2, (h, w, 64))
    values = rng.normal(size=(h, w, args.channels)).astype(np.float32)

    backends = ["python"] + (["cython"] if _kernels.compiled is not None else [])
    results = {}
    print(f"grid={grid.dims} rays={n} feature_map={h}x{w}x{args.channels} threads={args.threads}")
    print(f"{'workload':<12}{'backend':<10}{'seconds':>10}")
    for name in backends:
        t_occ, occ = best_of(lambda: label_occupancy(grid, cloud, threads=args.threads, backend=name), args.repeat)
        t_att, att = best_of(lambda: local_ray_attention(keys, values, grid, rig, QUERY_ENCODER,
                                                         threads=args.threads, backend=name), args.repeat)
        results[name] = (t_occ, t_att, occ, att)
        print(f"{'occupancy':<12}{name:<10}{t_occ:>10.3f}")
        print(f"{'attention':<12}{name:<10}{t_att:>10.3f}")
    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        same_occ = np.array_equal(py[2].labels, cy[2].labels)
        att_diff = float(np.abs(py[3].values - cy[3].values).max())
        print(f"speedup occupancy x{py[0] / cy[0]:.1f}  attention x{py[1] / cy[1]:.1f}")
        print(f"labels identical={same_occ}  attention max |diff|={att_diff:.2e}")
    else:
        print("compiled core not built; only the Python fallback was timed")


if __name__ == "__main__":
    main()
