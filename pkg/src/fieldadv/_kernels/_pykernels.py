"""Pure numpy implementations of the hot kernels.

Signatures mirror the compiled module exactly; results agree to rounding.
"""
import numpy as np

PRIMES = (1, 2654435761, 805459861)
_U32 = np.uint64(0xFFFFFFFF)


def _corners(u, res, dense, table_size):
    """Per-corner table indices [P,8], weights [P,8] and fractional offsets [P,3]."""
    pos = u * res
    i0 = np.minimum(np.floor(pos), res - 1).astype(np.int64)
    i0 = np.maximum(i0, 0)
    frac = pos - i0
    idx = np.empty((u.shape[0], 8), dtype=np.int64)
    w = np.empty((u.shape[0], 8), dtype=np.float64)
    for c in range(8):
        dx, dy, dz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        ix, iy, iz = i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz
        if dense:
            idx[:, c] = ix + iy * (res + 1) + iz * (res + 1) * (res + 1)
        else:
            h = (ix.astype(np.uint64) * np.uint64(PRIMES[0])) & _U32
            h ^= (iy.astype(np.uint64) * np.uint64(PRIMES[1])) & _U32
            h ^= (iz.astype(np.uint64) * np.uint64(PRIMES[2])) & _U32
            idx[:, c] = (h % np.uint64(table_size)).astype(np.int64)
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
        wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
        w[:, c] = wx * wy * wz
    return idx, w, frac


def hash_encode_fwd(u, table, resolutions, dense):
    P = u.shape[0]
    L, S, F = table.shape
    out = np.zeros((P, L * F), dtype=np.float64)
    for lvl in range(L):
        idx, w, _ = _corners(u, int(resolutions[lvl]), bool(dense[lvl]), S)
        feats = table[lvl][idx]  # P,8,F
        out[:, lvl * F:(lvl + 1) * F] = np.einsum("pc,pcf->pf", w, feats)
    return out


def hash_encode_bwd(u, table, grad, resolutions, dense, want_table, want_points):
    """Returns (d_table or None, d_u or None)."""
    P = u.shape[0]
    L, S, F = table.shape
    d_table = np.zeros_like(table) if want_table else None
    d_u = np.zeros((P, 3), dtype=np.float64) if want_points else None
    for lvl in range(L):
        res = int(resolutions[lvl])
        idx, w, frac = _corners(u, res, bool(dense[lvl]), S)
        g = grad[:, lvl * F:(lvl + 1) * F]
        if want_table:
            for f in range(F):
                d_table[lvl, :, f] += np.bincount(idx.ravel(), weights=(w * g[:, f:f + 1]).ravel(), minlength=S)
        if want_points:
            feats = table[lvl][idx]
            gdot = np.einsum("pcf,pf->pc", feats, g)
            for c in range(8):
                d = ((c & 1), (c >> 1) & 1, (c >> 2) & 1)
                ws = [frac[:, a] if d[a] else 1.0 - frac[:, a] for a in range(3)]
                for a in range(3):
                    sgn = 1.0 if d[a] else -1.0
                    others = ws[(a + 1) % 3] * ws[(a + 2) % 3]
                    d_u[:, a] += gdot[:, c] * sgn * others * res
    return d_table, d_u


def raster_faces(screen, faces, H, W):
    """Nearest-face id per pixel center; -1 where uncovered.

    ``screen`` holds (x_pixel, y_pixel, depth) per vertex. Faces with
    non-positive depth at any vertex or zero projected area are skipped.
    Ties in inverse depth resolve to the lowest face index.
    """
    face_id = np.full((H, W), -1, dtype=np.int32)
    m = faces.shape[0]
    if m == 0:
        return face_id
    p0, p1, p2 = screen[faces[:, 0]], screen[faces[:, 1]], screen[faces[:, 2]]
    area = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    ok = (np.abs(area) > 1e-12) & (p0[:, 2] > 0) & (p1[:, 2] > 0) & (p2[:, 2] > 0)
    xs = np.stack([p0[:, 0], p1[:, 0], p2[:, 0]], 1)
    ys = np.stack([p0[:, 1], p1[:, 1], p2[:, 1]], 1)
    # pixel j covers center j+0.5; candidate range is ceil(min-0.5) .. floor(max-0.5)
    x_lo = np.maximum(np.ceil(xs.min(1) - 0.5), 0)
    x_hi = np.minimum(np.floor(xs.max(1) - 0.5), W - 1)
    y_lo = np.maximum(np.ceil(ys.min(1) - 0.5), 0)
    y_hi = np.minimum(np.floor(ys.max(1) - 0.5), H - 1)
    ok &= (x_hi >= x_lo) & (y_hi >= y_lo)
    fidx = np.nonzero(ok)[0]
    if fidx.size == 0:
        return face_id
    nx = (x_hi[fidx] - x_lo[fidx] + 1).astype(np.int64)
    ny = (y_hi[fidx] - y_lo[fidx] + 1).astype(np.int64)
    counts = nx * ny
    cand_face = np.repeat(fidx, counts)
    start = np.cumsum(counts) - counts
    local = np.arange(cand_face.size) - np.repeat(start, counts)
    nxr = np.repeat(nx, counts)
    px = (np.repeat(x_lo[fidx], counts) + local % nxr).astype(np.int64)
    py = (np.repeat(y_lo[fidx], counts) + local // nxr).astype(np.int64)
    cx, cy = px + 0.5, py + 0.5
    a0, a1, a2 = p0[cand_face], p1[cand_face], p2[cand_face]
    ar = area[cand_face]
    l0 = ((a2[:, 0] - a1[:, 0]) * (cy - a1[:, 1]) - (a2[:, 1] - a1[:, 1]) * (cx - a1[:, 0])) / ar
    l1 = ((a0[:, 0] - a2[:, 0]) * (cy - a2[:, 1]) - (a0[:, 1] - a2[:, 1]) * (cx - a2[:, 0])) / ar
    l2 = ((a1[:, 0] - a0[:, 0]) * (cy - a0[:, 1]) - (a1[:, 1] - a0[:, 1]) * (cx - a0[:, 0])) / ar
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    if not inside.any():
        return face_id
    inv_z = l0 / a0[:, 2] + l1 / a1[:, 2] + l2 / a2[:, 2]
    pix = (py * W + px)[inside]
    f = cand_face[inside]
    iz = inv_z[inside]
    order = np.lexsort((f, -iz, pix))
    pix, f = pix[order], f[order]
    first = np.ones(pix.size, dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    face_id.ravel()[pix[first]] = f[first]
    return face_id
