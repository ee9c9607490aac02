import os
import subprocess
import sys

import numpy as np
import pytest

from voxelray import _kernels, _pykernels


def test_get_names():
    assert _kernels.get("python") is _pykernels
    assert _kernels.get() is _kernels.active
    with pytest.raises(ValueError):
        _kernels.get("fortran")


def test_active_matches_build():
    if _kernels.compiled is None:
        assert _kernels.BACKEND == "python"
    else:
        assert _kernels.BACKEND == "cython"


def test_env_forces_fallback():
    env = dict(os.environ, VOXELRAY_BACKEND="python")
    r = subprocess.run([sys.executable, "-c", "from voxelray import _kernels; print(_kernels.BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.stdout.strip() == "python"


def test_traverse_buffer_worst_case(backend):
    # long diagonal through every axis uses the most steps
    k = _kernels.get(backend)
    dims = (7, 5, 3)
    path = k.traverse_ray([-1.0, -1.0, -1.0], [7.9, 5.9, 3.9], dims)
    assert len(path) <= sum(dims) - 2 + 1
    assert len(set(path)) == len(path)


def test_mark_rays_accumulates(backend):
    k = _kernels.get(backend)
    out = np.zeros(4, dtype=np.uint8)
    k.mark_rays([0.5, 0.5, 0.5], np.array([[3.5, 0.5, 0.5]]), (4, 1, 1), out)
    k.mark_rays([3.5, 0.5, 0.5], np.array([[2.5, 0.5, 0.5]]), (4, 1, 1), out)
    assert out.tolist() == [1, 1, 1, 1]


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_ray_attention_kernels_agree(dtype, rng):
    if _kernels.compiled is None:
        pytest.skip("compiled core not built")
    h, w, n, c = 6, 9, 16, 5
    keys = rng.uniform(0, 1, (h, w, n))
    values = rng.normal(size=(h, w, c)).astype(dtype)
    m = 200
    uv = np.column_stack([rng.uniform(0, w - 1, m), rng.uniform(0, h - 1, m)])
    depth = rng.uniform(0, 10, m)
    valid = (rng.uniform(size=m) > 0.2).astype(np.uint8)
    grid_x = np.linspace(0, 10, n)
    res = []
    for mod in (_kernels.python, _kernels.compiled):
        out = np.full((m, c), np.nan, dtype=dtype)
        wts = np.full(m, np.nan)
        mod.ray_attention(keys, values, uv, depth, valid, grid_x, 2.0, 0.7, out, wts)
        res.append((out, wts))
    np.testing.assert_allclose(res[0][1], res[1][1], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(res[0][0], res[1][0], rtol=1e-5 if dtype == np.float32 else 1e-12, atol=1e-6)
    assert not res[1][0][valid == 0].any()
