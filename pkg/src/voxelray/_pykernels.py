"""Pure Python/numpy kernels; reference behaviour for ``_core.pyx``.

All coordinates handed to the ray kernels are in voxel units relative to the
grid's min corner, so voxel ``(i, j, k)`` is the cube ``[i, i+1) x ...``.
"""
import math

import numpy as np

_INF = float("inf")
_CHUNK = 32768


def traverse_ray(g0, g1, dims):
    """Linear indices of voxels crossed by the open segment ``(g0, g1)``.

    The voxel holding ``g1`` is excluded; on exact ties the lowest axis steps
    first.
    """
    x0, y0, z0 = float(g0[0]), float(g0[1]), float(g0[2])
    start = (x0, y0, z0)
    d = (float(g1[0]) - x0, float(g1[1]) - y0, float(g1[2]) - z0)
    nx, ny, nz = int(dims[0]), int(dims[1]), int(dims[2])
    n = (nx, ny, nz)
    t0, t1 = 0.0, 1.0
    for a in range(3):
        if d[a] == 0.0:
            if not 0.0 <= start[a] < n[a]:
                return []
        else:
            ta = -start[a] / d[a]
            tb = (n[a] - start[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
    if t0 >= t1:
        return []
    vox = [0, 0, 0]
    step = [0, 0, 0]
    end = [0, 0, 0]
    for a in range(3):
        p = start[a] + t0 * d[a]
        v = math.floor(p)
        if d[a] < 0.0 and v == p:
            v -= 1
        vox[a] = min(max(v, 0), n[a] - 1)
        step[a] = 1 if d[a] > 0.0 else (-1 if d[a] < 0.0 else 0)
        end[a] = math.floor(float(g1[a]))
    out = []
    for _ in range(nx + ny + nz + 3):
        if vox == end:
            break
        out.append((vox[2] * ny + vox[1]) * nx + vox[0])
        axis = -1
        tbest = _INF
        for a in range(3):
            if step[a]:
                tn = (vox[a] + (step[a] > 0) - start[a]) / d[a]
                if tn < tbest:
                    tbest = tn
                    axis = a
        if axis < 0 or tbest >= t1:
            break
        vox[axis] += step[axis]
        if not 0 <= vox[axis] < n[axis]:
            break
    return out


def mark_rays(g0, ends, dims, out):
    """Set ``out[idx] = 1`` for every voxel crossed by a ray ``g0 -> end``."""
    for e in ends:
        for idx in traverse_ray(g0, e, dims):
            out[idx] = 1


def ray_attention(keys, values, uv, depth, valid, grid_x, inv_sigma2, coef, out, weights):
    """Fill ``out`` and ``weights`` in place; clears ``valid`` off-image."""
    h, w, n = keys.shape
    c = values.shape[2]
    for s in range(0, uv.shape[0], _CHUNK):
        sl = slice(s, s + _CHUNK)
        u, v = uv[sl, 0], uv[sl, 1]
        ok = valid[sl].astype(bool) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
        valid[sl] = ok
        idx = np.flatnonzero(ok)
        wts = np.zeros(u.shape[0])
        res = np.zeros((u.shape[0], c))
        if idx.size:
            uu, vv = u[idx], v[idx]
            u0 = np.clip(np.floor(uu), 0, max(w - 2, 0)).astype(np.intp)
            v0 = np.clip(np.floor(vv), 0, max(h - 2, 0)).astype(np.intp)
            u1 = np.minimum(u0 + 1, w - 1)
            v1 = np.minimum(v0 + 1, h - 1)
            fu = (uu - u0)[:, None]
            fv = (vv - v0)[:, None]

            def sample(m):
                return (1 - fv) * ((1 - fu) * m[v0, u0] + fu * m[v0, u1]) + fv * (
                    (1 - fu) * m[v1, u0] + fu * m[v1, u1]
                )

            diff = grid_x[None, :] - depth[sl][idx, None]
            q = coef * np.exp(-(diff * diff) * inv_sigma2)
            k = sample(keys)
            wts[idx] = np.einsum("ij,ij->i", k, q)
            res[idx] = wts[idx, None] * sample(values)
        weights[sl] = wts
        out[sl] = res
