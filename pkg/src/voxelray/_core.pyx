# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ray-traversal and local-ray-attention kernels.

Mirrors ``_pykernels`` exactly in semantics; see that module for the
argument conventions.
"""
import numpy as np

from libc.math cimport floor, exp, INFINITY
from cython cimport floating


cdef inline int _traverse(double x0, double y0, double z0,
                          double x1, double y1, double z1,
                          int nx, int ny, int nz,
                          long long *buf, int cap) noexcept nogil:
    cdef double s[3]
    cdef double e[3]
    cdef double d[3]
    cdef int n[3]
    cdef long long vox[3]
    cdef long long end[3]
    cdef int step[3]
    cdef double t0 = 0.0, t1 = 1.0, ta, tb, tmp, p, tn, tbest
    cdef int a, axis, count = 0, it
    cdef long long v
    s[0] = x0; s[1] = y0; s[2] = z0
    e[0] = x1; e[1] = y1; e[2] = z1
    d[0] = x1 - x0; d[1] = y1 - y0; d[2] = z1 - z0
    n[0] = nx; n[1] = ny; n[2] = nz
    for a in range(3):
        if d[a] == 0.0:
            if not (0.0 <= s[a] and s[a] < n[a]):
                return 0
        else:
            ta = -s[a] / d[a]
            tb = (n[a] - s[a]) / d[a]
            if ta > tb:
                tmp = ta; ta = tb; tb = tmp
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 >= t1:
        return 0
    for a in range(3):
        p = s[a] + t0 * d[a]
        v = <long long>floor(p)
        if d[a] < 0.0 and v == p:
            v -= 1
        if v < 0:
            v = 0
        if v > n[a] - 1:
            v = n[a] - 1
        vox[a] = v
        step[a] = 1 if d[a] > 0.0 else (-1 if d[a] < 0.0 else 0)
        end[a] = <long long>floor(e[a])
    for it in range(nx + ny + nz + 3):
        if vox[0] == end[0] and vox[1] == end[1] and vox[2] == end[2]:
            break
        if count < cap:
            buf[count] = (vox[2] * ny + vox[1]) * nx + vox[0]
        count += 1
        axis = -1
        tbest = INFINITY
        for a in range(3):
            if step[a] != 0:
                tn = (vox[a] + (1 if step[a] > 0 else 0) - s[a]) / d[a]
                if tn < tbest:
                    tbest = tn
                    axis = a
        if axis < 0 or tbest >= t1:
            break
        vox[axis] += step[axis]
        if vox[axis] < 0 or vox[axis] >= n[axis]:
            break
    return count


def traverse_ray(g0, g1, dims):
    cdef int nx = dims[0], ny = dims[1], nz = dims[2]
    cdef int cap = nx + ny + nz + 3
    cdef long long[::1] buf = np.empty(cap, dtype=np.int64)
    cdef int count = _traverse(g0[0], g0[1], g0[2], g1[0], g1[1], g1[2],
                               nx, ny, nz, &buf[0], cap)
    return [int(buf[i]) for i in range(count)]


def mark_rays(g0, const double[:, ::1] ends, dims, unsigned char[::1] out):
    cdef int nx = dims[0], ny = dims[1], nz = dims[2]
    cdef int cap = nx + ny + nz + 3
    cdef long long[::1] buf = np.empty(cap, dtype=np.int64)
    cdef double x0 = g0[0], y0 = g0[1], z0 = g0[2]
    cdef Py_ssize_t r, m = ends.shape[0]
    cdef int i, count
    with nogil:
        for r in range(m):
            count = _traverse(x0, y0, z0, ends[r, 0], ends[r, 1], ends[r, 2],
                              nx, ny, nz, &buf[0], cap)
            for i in range(count):
                out[buf[i]] = 1


def ray_attention(const double[:, :, ::1] keys, const floating[:, :, ::1] values,
                  const double[:, ::1] uv, const double[::1] depth,
                  unsigned char[::1] valid, const double[::1] grid_x,
                  double inv_sigma2, double coef,
                  floating[:, ::1] out, double[::1] weights):
    cdef Py_ssize_t h = keys.shape[0], w = keys.shape[1], n = keys.shape[2]
    cdef Py_ssize_t c = values.shape[2], num = uv.shape[0]
    cdef Py_ssize_t i, ch, u0, u1, v0, v1
    cdef double u, v, fu, fv, a00, a01, a10, a11, key, diff, wsum
    with nogil:
        for i in range(num):
            u = uv[i, 0]
            v = uv[i, 1]
            if valid[i] and not (u >= 0 and u <= w - 1 and v >= 0 and v <= h - 1):
                valid[i] = 0
            if not valid[i]:
                weights[i] = 0.0
                for ch in range(c):
                    out[i, ch] = 0.0
                continue
            u0 = <Py_ssize_t>floor(u)
            if u0 > w - 2:
                u0 = w - 2
            if u0 < 0:
                u0 = 0
            v0 = <Py_ssize_t>floor(v)
            if v0 > h - 2:
                v0 = h - 2
            if v0 < 0:
                v0 = 0
            u1 = u0 + 1 if u0 + 1 < w else w - 1
            v1 = v0 + 1 if v0 + 1 < h else h - 1
            fu = u - u0
            fv = v - v0
            a00 = (1 - fv) * (1 - fu)
            a01 = (1 - fv) * fu
            a10 = fv * (1 - fu)
            a11 = fv * fu
            wsum = 0.0
            for ch in range(n):
                key = (a00 * keys[v0, u0, ch] + a01 * keys[v0, u1, ch]
                       + a10 * keys[v1, u0, ch] + a11 * keys[v1, u1, ch])
                diff = grid_x[ch] - depth[i]
                wsum = wsum + key * coef * exp(-(diff * diff) * inv_sigma2)
            weights[i] = wsum
            for ch in range(c):
                out[i, ch] = <floating>(wsum * (a00 * values[v0, u0, ch] + a01 * values[v0, u1, ch]
                                                + a10 * values[v1, u0, ch] + a11 * values[v1, u1, ch]))
