"""Numba kernels: nearest-segment lookups on a uniform cell grid, radius
candidate lists, and landmark-term accumulation for the pose-graph solver.

Every segment is registered in each cell overlapped by its bounding box grown
by ``reach``; a query point therefore only inspects its own cell and any
segment closer than ``reach`` is guaranteed to be found.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def build_grid(seg_a, seg_b, origin, cell, nx, ny, reach):
    n = seg_a.shape[0]
    counts = np.zeros(nx * ny + 1, dtype=np.int64)
    for s in range(n):
        x0 = min(seg_a[s, 0], seg_b[s, 0]) - reach
        x1 = max(seg_a[s, 0], seg_b[s, 0]) + reach
        y0 = min(seg_a[s, 1], seg_b[s, 1]) - reach
        y1 = max(seg_a[s, 1], seg_b[s, 1]) + reach
        i0 = max(int(np.floor((x0 - origin[0]) / cell)), 0)
        i1 = min(int(np.floor((x1 - origin[0]) / cell)), nx - 1)
        j0 = max(int(np.floor((y0 - origin[1]) / cell)), 0)
        j1 = min(int(np.floor((y1 - origin[1]) / cell)), ny - 1)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                counts[j * nx + i + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    items = np.empty(start[-1], dtype=np.int64)
    for s in range(n):
        x0 = min(seg_a[s, 0], seg_b[s, 0]) - reach
        x1 = max(seg_a[s, 0], seg_b[s, 0]) + reach
        y0 = min(seg_a[s, 1], seg_b[s, 1]) - reach
        y1 = max(seg_a[s, 1], seg_b[s, 1]) + reach
        i0 = max(int(np.floor((x0 - origin[0]) / cell)), 0)
        i1 = min(int(np.floor((x1 - origin[0]) / cell)), nx - 1)
        j0 = max(int(np.floor((y0 - origin[1]) / cell)), 0)
        j1 = min(int(np.floor((y1 - origin[1]) / cell)), ny - 1)
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                c = j * nx + i
                items[fill[c]] = s
                fill[c] += 1
    return start, items


@njit(cache=True, inline="always")
def _closest(px, py, pz, seg_a, seg_b, seg_z, start, items, origin, cell, nx, ny, use_z):
    i = int(np.floor((px - origin[0]) / cell))
    j = int(np.floor((py - origin[1]) / cell))
    best = np.inf
    best_s = -1
    best_t = 0.0
    if i < 0 or j < 0 or i >= nx or j >= ny:
        return best, best_s, best_t
    c = j * nx + i
    for k in range(start[c], start[c + 1]):
        s = items[k]
        ax = seg_a[s, 0]
        ay = seg_a[s, 1]
        dx = seg_b[s, 0] - ax
        dy = seg_b[s, 1] - ay
        t = ((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = ax + t * dx - px
        ey = ay + t * dy - py
        d2 = ex * ex + ey * ey
        if use_z:
            ez = seg_z[s, 0] + t * (seg_z[s, 1] - seg_z[s, 0]) - pz
            d2 += ez * ez
        # strict comparison keeps the lowest segment index on exact ties
        if d2 < best:
            best = d2
            best_s = s
            best_t = t
    return np.sqrt(best), best_s, best_t


@njit(cache=True, nogil=True)
def nearest(points, pz, seg_a, seg_b, seg_z, start, items, origin, cell, nx, ny, use_z):
    n = points.shape[0]
    dist = np.empty(n)
    seg = np.empty(n, dtype=np.int64)
    foot = np.empty((n, 2))
    for p in range(n):
        d, s, t = _closest(points[p, 0], points[p, 1], pz[p], seg_a, seg_b, seg_z,
                           start, items, origin, cell, nx, ny, use_z)
        dist[p] = d
        seg[p] = s
        if s >= 0:
            foot[p, 0] = seg_a[s, 0] + t * (seg_b[s, 0] - seg_a[s, 0])
            foot[p, 1] = seg_a[s, 1] + t * (seg_b[s, 1] - seg_a[s, 1])
        else:
            foot[p, 0] = np.nan
            foot[p, 1] = np.nan
    return dist, seg, foot


@njit(cache=True, nogil=True)
def score_poses(points, pz, poses, threshold, seg_a, seg_b, seg_z, start, items,
                origin, cell, nx, ny, use_z):
    """Inlier count and mean inlier distance of sensor-frame points under each pose."""
    k = poses.shape[0]
    n = points.shape[0]
    count = np.zeros(k, dtype=np.int64)
    mean_err = np.full(k, np.inf)
    for h in range(k):
        c = np.cos(poses[h, 2])
        s = np.sin(poses[h, 2])
        tx = poses[h, 0]
        ty = poses[h, 1]
        total = 0.0
        m = 0
        for p in range(n):
            x = c * points[p, 0] - s * points[p, 1] + tx
            y = s * points[p, 0] + c * points[p, 1] + ty
            d, _, _ = _closest(x, y, pz[p], seg_a, seg_b, seg_z, start, items,
                               origin, cell, nx, ny, use_z)
            if d <= threshold:
                total += d
                m += 1
        count[h] = m
        if m > 0:
            mean_err[h] = total / m
    return count, mean_err


@njit(cache=True)
def radius_csr(centers, radii, pts):
    """Row-wise indices of ``pts`` within ``radii`` of each center, as (flat, offsets, lens)."""
    m, k = centers.shape[0], pts.shape[0]
    hit = np.zeros((m, k), dtype=np.bool_)
    lens = np.zeros(m, dtype=np.int64)
    for i in range(m):
        r2 = radii[i] * radii[i]
        for j in range(k):
            dx = centers[i, 0] - pts[j, 0]
            dy = centers[i, 1] - pts[j, 1]
            if dx * dx + dy * dy <= r2:
                hit[i, j] = True
                lens[i] += 1
    offsets = np.zeros(m, dtype=np.int64)
    for i in range(1, m):
        offsets[i] = offsets[i - 1] + lens[i - 1]
    flat = np.empty(offsets[m - 1] + lens[m - 1] if m else 0, dtype=np.int64)
    for i in range(m):
        f = offsets[i]
        for j in range(k):
            if hit[i, j]:
                flat[f] = j
                f += 1
    return flat, offsets, lens


@njit(cache=True)
def landmark_chi2(x, node, d, l, info):
    m = node.shape[0]
    out = np.empty(m)
    for e in range(m):
        p = node[e]
        c, s = np.cos(x[p, 2]), np.sin(x[p, 2])
        rx = c * d[e, 0] - s * d[e, 1] + x[p, 0] - l[e, 0]
        ry = s * d[e, 0] + c * d[e, 1] + x[p, 1] - l[e, 1]
        out[e] = (rx * (info[e, 0, 0] * rx + info[e, 0, 1] * ry)
                  + ry * (info[e, 1, 0] * rx + info[e, 1, 1] * ry))
    return out


@njit(cache=True)
def landmark_normal(x, node, d, l, info, weight, n):
    """Diagonal Hessian blocks (n, 3, 3) and gradient (n, 3) of weighted landmark terms."""
    H = np.zeros((n, 3, 3))
    g = np.zeros((n, 3))
    jac = np.zeros((2, 3))
    jac[0, 0] = 1.0
    jac[1, 1] = 1.0
    for e in range(node.shape[0]):
        p = node[e]
        c, s = np.cos(x[p, 2]), np.sin(x[p, 2])
        r0 = c * d[e, 0] - s * d[e, 1] + x[p, 0] - l[e, 0]
        r1 = s * d[e, 0] + c * d[e, 1] + x[p, 1] - l[e, 1]
        jac[0, 2] = -d[e, 0] * s - d[e, 1] * c
        jac[1, 2] = d[e, 0] * c - d[e, 1] * s
        w = weight[e]
        i00, i01 = w * info[e, 0, 0], w * info[e, 0, 1]
        i10, i11 = w * info[e, 1, 0], w * info[e, 1, 1]
        for a in range(3):
            t0 = jac[0, a] * i00 + jac[1, a] * i10
            t1 = jac[0, a] * i01 + jac[1, a] * i11
            g[p, a] += t0 * r0 + t1 * r1
            for b in range(3):
                H[p, a, b] += t0 * jac[0, b] + t1 * jac[1, b]
    return H, g


@njit(cache=True)
def pick_partner(flat, offsets, lens, mpts, la, b, sep, heading, tol, max_dturn, min_sep, u):
    """For each draw, choose uniformly (via ``u``) among the candidates of detection ``b``
    whose distance to map point ``la`` matches ``sep`` and whose bearing from it is within
    ``max_dturn`` of ``heading``. Returns -1 where nothing is compatible."""
    n = la.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    buf = np.empty(lens.max() if lens.shape[0] else 0, dtype=np.int64)
    for h in range(n):
        if la[h] < 0:
            continue
        px, py = mpts[la[h], 0], mpts[la[h], 1]
        k = 0
        for q in range(offsets[b[h]], offsets[b[h]] + lens[b[h]]):
            j = flat[q]
            dx = mpts[j, 0] - px
            dy = mpts[j, 1] - py
            dist = np.sqrt(dx * dx + dy * dy)
            if dist <= min_sep or abs(dist - sep[h]) > tol:
                continue
            turn = np.arctan2(dy, dx) - heading[h]
            turn = np.pi - np.mod(np.pi - turn, 2.0 * np.pi)
            if abs(turn) <= max_dturn:
                buf[k] = j
                k += 1
        if k:
            out[h] = buf[min(int(u[h] * k), k - 1)]
    return out
