# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: hash-grid encoding and z-buffer face resolve."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs
from libc.stdint cimport uint32_t, int64_t

cnp.import_array()

cdef uint32_t P1 = 2654435761u
cdef uint32_t P2 = 805459861u


cdef inline int64_t _index(int64_t ix, int64_t iy, int64_t iz, int64_t res, bint dense, int64_t size) nogil:
    cdef uint32_t h
    if dense:
        return ix + iy * (res + 1) + iz * (res + 1) * (res + 1)
    h = (<uint32_t>ix) ^ ((<uint32_t>iy) * P1) ^ ((<uint32_t>iz) * P2)
    if size & (size - 1) == 0:
        return <int64_t>(h & <uint32_t>(size - 1))
    return <int64_t>(h % <uint32_t>size)


cdef inline void _cell(double u, int64_t res, int64_t* i0, double* frac) nogil:
    cdef double pos = u * res
    cdef double fl = floor(pos)
    if fl > res - 1:
        fl = res - 1
    if fl < 0:
        fl = 0
    i0[0] = <int64_t>fl
    frac[0] = pos - fl


def hash_encode_fwd(double[:, ::1] u, double[:, :, ::1] table, cnp.int64_t[::1] resolutions, cnp.uint8_t[::1] dense):
    cdef Py_ssize_t P = u.shape[0], L = table.shape[0], S = table.shape[1], F = table.shape[2]
    out_arr = np.zeros((P, L * F), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t p, lvl, c, f
    cdef int64_t res, ix0, iy0, iz0, idx
    cdef double fx, fy, fz, w
    # level-outer so one level's table slice stays cache resident
    with nogil:
        for lvl in range(L):
            res = resolutions[lvl]
            for p in range(P):
                _cell(u[p, 0], res, &ix0, &fx)
                _cell(u[p, 1], res, &iy0, &fy)
                _cell(u[p, 2], res, &iz0, &fz)
                for c in range(8):
                    w = (fx if c & 1 else 1.0 - fx) * (fy if (c >> 1) & 1 else 1.0 - fy) * (fz if (c >> 2) & 1 else 1.0 - fz)
                    idx = _index(ix0 + (c & 1), iy0 + ((c >> 1) & 1), iz0 + ((c >> 2) & 1), res, dense[lvl], S)
                    for f in range(F):
                        out[p, lvl * F + f] += w * table[lvl, idx, f]
    return out_arr


def hash_encode_bwd(double[:, ::1] u, double[:, :, ::1] table, double[:, ::1] grad,
                    cnp.int64_t[::1] resolutions, cnp.uint8_t[::1] dense, bint want_table, bint want_points):
    cdef Py_ssize_t P = u.shape[0], L = table.shape[0], S = table.shape[1], F = table.shape[2]
    dt_arr = np.zeros((L, S, F), dtype=np.float64) if want_table else None
    du_arr = np.zeros((P, 3), dtype=np.float64) if want_points else None
    cdef double[:, :, ::1] dt
    cdef double[:, ::1] du
    if want_table:
        dt = dt_arr
    if want_points:
        du = du_arr
    cdef Py_ssize_t p, lvl, c, f
    cdef int64_t res, ix0, iy0, iz0, idx
    cdef double fx, fy, fz, wx, wy, wz, w, gd, sx, sy, sz
    # level-outer so one level's table slice stays cache resident
    with nogil:
        for lvl in range(L):
            res = resolutions[lvl]
            for p in range(P):
                _cell(u[p, 0], res, &ix0, &fx)
                _cell(u[p, 1], res, &iy0, &fy)
                _cell(u[p, 2], res, &iz0, &fz)
                for c in range(8):
                    wx = fx if c & 1 else 1.0 - fx
                    wy = fy if (c >> 1) & 1 else 1.0 - fy
                    wz = fz if (c >> 2) & 1 else 1.0 - fz
                    w = wx * wy * wz
                    idx = _index(ix0 + (c & 1), iy0 + ((c >> 1) & 1), iz0 + ((c >> 2) & 1), res, dense[lvl], S)
                    if want_table:
                        for f in range(F):
                            dt[lvl, idx, f] += w * grad[p, lvl * F + f]
                    if want_points:
                        gd = 0.0
                        for f in range(F):
                            gd += table[lvl, idx, f] * grad[p, lvl * F + f]
                        sx = 1.0 if c & 1 else -1.0
                        sy = 1.0 if (c >> 1) & 1 else -1.0
                        sz = 1.0 if (c >> 2) & 1 else -1.0
                        du[p, 0] += gd * sx * wy * wz * res
                        du[p, 1] += gd * sy * wz * wx * res
                        du[p, 2] += gd * sz * wx * wy * res
    return dt_arr, du_arr


def raster_faces(double[:, ::1] screen, cnp.int64_t[:, ::1] faces, int H, int W):
    face_arr = np.full((H, W), -1, dtype=np.int32)
    zbuf_arr = np.full((H, W), -1.0, dtype=np.float64)
    cdef int[:, ::1] face_id = face_arr
    cdef double[:, ::1] zbuf = zbuf_arr
    cdef Py_ssize_t m = faces.shape[0], fi
    cdef int x, y, x_lo, x_hi, y_lo, y_hi
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2, area, cx, cy, l0, l1, l2, iz
    cdef double mnx, mxx, mny, mxy
    with nogil:
        for fi in range(m):
            x0 = screen[faces[fi, 0], 0]; y0 = screen[faces[fi, 0], 1]; z0 = screen[faces[fi, 0], 2]
            x1 = screen[faces[fi, 1], 0]; y1 = screen[faces[fi, 1], 1]; z1 = screen[faces[fi, 1], 2]
            x2 = screen[faces[fi, 2], 0]; y2 = screen[faces[fi, 2], 1]; z2 = screen[faces[fi, 2], 2]
            if z0 <= 0 or z1 <= 0 or z2 <= 0:
                continue
            area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
            if fabs(area) <= 1e-12:
                continue
            mnx = min(x0, min(x1, x2)); mxx = max(x0, max(x1, x2))
            mny = min(y0, min(y1, y2)); mxy = max(y0, max(y1, y2))
            x_lo = <int>max(ceil(mnx - 0.5), 0.0)
            x_hi = <int>min(floor(mxx - 0.5), <double>(W - 1))
            y_lo = <int>max(ceil(mny - 0.5), 0.0)
            y_hi = <int>min(floor(mxy - 0.5), <double>(H - 1))
            for y in range(y_lo, y_hi + 1):
                cy = y + 0.5
                for x in range(x_lo, x_hi + 1):
                    cx = x + 0.5
                    l0 = ((x2 - x1) * (cy - y1) - (y2 - y1) * (cx - x1)) / area
                    l1 = ((x0 - x2) * (cy - y2) - (y0 - y2) * (cx - x2)) / area
                    l2 = ((x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)) / area
                    if l0 < 0 or l1 < 0 or l2 < 0:
                        continue
                    iz = l0 / z0 + l1 / z1 + l2 / z2
                    if iz > zbuf[y, x]:
                        zbuf[y, x] = iz
                        face_id[y, x] = <int>fi
    return face_arr
