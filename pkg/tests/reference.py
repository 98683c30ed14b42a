"""Independent scalar reference implementations used as test oracles.

Everything here is deliberately naive: plain Python loops over scalars,
math.fsum reductions, no shared code with the package beyond the public
coordinate conventions it is checking.
"""

import math

import numpy as np


def clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def ref_sample_trilinear(data_zyx, x, y, z):
    """8-corner weighted sum at one clamped coordinate, scalar arithmetic."""
    nz, ny, nx = data_zyx.shape
    x = clamp(float(x), 0.0, nx - 1)
    y = clamp(float(y), 0.0, ny - 1)
    z = clamp(float(z), 0.0, nz - 1)
    x0, y0, z0 = int(math.floor(x)), int(math.floor(y)), int(math.floor(z))
    x1, y1, z1 = min(x0 + 1, nx - 1), min(y0 + 1, ny - 1), min(z0 + 1, nz - 1)
    fx, fy, fz = x - x0, y - y0, z - z0
    total = 0.0
    for zi, wz in ((z0, 1.0 - fz), (z1, fz)):
        for yi, wy in ((y0, 1.0 - fy), (y1, fy)):
            for xi, wx in ((x0, 1.0 - fx), (x1, fx)):
                total += wz * wy * wx * float(data_zyx[zi, yi, xi])
    return total


def ref_map_coord(i, n_out, n_in):
    return clamp((i + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1)


def ref_resample(data_zyx, new_dims_xyz):
    """Triple-loop resample with half-pixel-center coordinate mapping."""
    nz, ny, nx = data_zyx.shape
    mx, my, mz = new_dims_xyz
    out = np.empty((mz, my, mx), dtype=np.float64)
    for z in range(mz):
        zc = ref_map_coord(z, mz, nz)
        for y in range(my):
            yc = ref_map_coord(y, my, ny)
            for x in range(mx):
                xc = ref_map_coord(x, mx, nx)
                out[z, y, x] = ref_sample_trilinear(data_zyx, xc, yc, zc)
    return out


def ref_descriptor(levels, target_dims, coord):
    """Descriptor at one image-grid coordinate.

    ``levels`` is a list of (C, nz, ny, nx) arrays in ascending level order;
    each segment is interpolated at the mapped coordinate and L2-normalized.
    """
    segments = []
    for data in levels:
        _, nz, ny, nx = data.shape
        xc = ref_map_coord(coord[0], target_dims[0], nx)
        yc = ref_map_coord(coord[1], target_dims[1], ny)
        zc = ref_map_coord(coord[2], target_dims[2], nz)
        seg = [ref_sample_trilinear(data[c], xc, yc, zc) for c in range(data.shape[0])]
        norm = math.sqrt(math.fsum(v * v for v in seg))
        if norm <= 1e-12:
            seg = [0.0] * len(seg)
        else:
            seg = [v / norm for v in seg]
        segments.extend(seg)
    return segments


def ref_cosine(a, b):
    na = math.sqrt(math.fsum(float(v) * float(v) for v in a))
    nb = math.sqrt(math.fsum(float(v) * float(v) for v in b))
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return math.fsum(float(x) * float(y) for x, y in zip(a, b)) / (na * nb)


def ref_match(levels_a, levels_b, target_dims_a, target_dims_b, query_points, box=None):
    """Naive matcher: per query, scan candidates in raster order, keep the
    first strict improvement (ties keep the earlier candidate).

    ``box`` is (rx, ry, rz) half-widths or None for a global scan. Returns a
    list of (match_xyz, score, n_candidates) or None when a box is empty.
    """
    nx, ny, nz = target_dims_b
    if box is None:
        # global scan: build every candidate descriptor once, then scan
        cand = []
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    cand.append(((x, y, z), ref_descriptor(levels_b, target_dims_b, (x, y, z))))
        results = []
        for p in query_points:
            qd = ref_descriptor(levels_a, target_dims_a, p)
            best = None
            for coord, cd in cand:
                s = ref_cosine(qd, cd)
                if best is None or s > best[1]:
                    best = (coord, s)
            results.append((best[0], best[1], len(cand)))
        return results

    results = []
    for p in query_points:
        qd = ref_descriptor(levels_a, target_dims_a, p)
        cx, cy, cz = (int(math.floor(v + 0.5)) for v in p)
        lo = (max(0, cx - box[0]), max(0, cy - box[1]), max(0, cz - box[2]))
        hi = (min(nx - 1, cx + box[0]), min(ny - 1, cy + box[1]), min(nz - 1, cz + box[2]))
        if any(a > b for a, b in zip(lo, hi)):
            results.append(None)
            continue
        best = None
        count = 0
        for z in range(lo[2], hi[2] + 1):
            for y in range(lo[1], hi[1] + 1):
                for x in range(lo[0], hi[0] + 1):
                    count += 1
                    cd = ref_descriptor(levels_b, target_dims_b, (x, y, z))
                    s = ref_cosine(qd, cd)
                    if best is None or s > best[1]:
                        best = ((x, y, z), s)
        results.append((best[0], best[1], count))
    return results
