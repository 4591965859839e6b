# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. API mirrors memslam._kernels_py exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fabs, floor, hypot, sin, sqrt

cnp.import_array()

BACKEND = "compiled"

cdef double INF = float("inf")


def raycast(double px, double py, double ptheta,
            cnp.ndarray[cnp.float64_t, ndim=1] angles,
            cnp.ndarray[cnp.float64_t, ndim=2] segments,
            cnp.ndarray[cnp.float64_t, ndim=2] circles,
            double max_range):
    cdef Py_ssize_t nb = angles.shape[0]
    cdef Py_ssize_t ns = segments.shape[0]
    cdef Py_ssize_t nc = circles.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.full(nb, max_range)
    cdef double[:, :] seg = segments
    cdef double[:, :] circ = circles
    cdef double[:] ang = angles
    cdef double[:] res = out
    cdef Py_ssize_t i, j
    cdef double a, dx, dy, best, ex, ey, wx, wy, denom, t, u
    cdef double cx, cy, r2, b, c, disc, sq, t_near, t_far
    for i in range(nb):
        a = ang[i] + ptheta
        dx = cos(a)
        dy = sin(a)
        best = max_range
        for j in range(ns):
            ex = seg[j, 2] - seg[j, 0]
            ey = seg[j, 3] - seg[j, 1]
            denom = dx * ey - dy * ex
            if fabs(denom) <= 1e-12:
                continue
            wx = seg[j, 0] - px
            wy = seg[j, 1] - py
            t = (wx * ey - wy * ex) / denom
            u = (wx * dy - wy * dx) / denom
            if t >= 0.0 and u >= 0.0 and u <= 1.0 and t < best:
                best = t
        for j in range(nc):
            cx = circ[j, 0] - px
            cy = circ[j, 1] - py
            r2 = circ[j, 2] * circ[j, 2]
            b = dx * cx + dy * cy
            c = cx * cx + cy * cy - r2
            disc = b * b - c
            if disc < 0.0:
                continue
            sq = sqrt(disc)
            t_near = b - sq
            t_far = b + sq
            if t_near >= 0.0:
                t = t_near
            elif t_far >= 0.0:
                t = t_far
            else:
                continue
            if t < best:
                best = t
        res[i] = best
    return out


def nearest_neighbors(cnp.ndarray[cnp.float64_t, ndim=2] ref,
                      cnp.ndarray[cnp.float64_t, ndim=2] query):
    cdef Py_ssize_t m = ref.shape[0]
    cdef Py_ssize_t n = query.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = np.zeros(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dist = np.zeros(n)
    cdef double[:, :] r = ref
    cdef double[:, :] q = query
    cdef long long[:] iv = idx
    cdef double[:] dv = dist
    cdef Py_ssize_t i, j, bj
    cdef double qx, qy, dsq, best
    for i in range(n):
        qx = q[i, 0]
        qy = q[i, 1]
        best = INF
        bj = 0
        for j in range(m):
            dsq = (r[j, 0] - qx) * (r[j, 0] - qx) + (r[j, 1] - qy) * (r[j, 1] - qy)
            if dsq < best:
                best = dsq
                bj = j
        iv[i] = bj
        dv[i] = sqrt(best)
    return idx, dist


def mark_rays(cnp.ndarray[cnp.uint8_t, ndim=2] free,
              cnp.ndarray[cnp.uint8_t, ndim=2] occ,
              double x0, double y0,
              cnp.ndarray[cnp.float64_t, ndim=1] ex,
              cnp.ndarray[cnp.float64_t, ndim=1] ey,
              cnp.ndarray[cnp.uint8_t, ndim=1] occ_flag,
              double ox, double oy, double res):
    cdef Py_ssize_t h = free.shape[0]
    cdef Py_ssize_t w = free.shape[1]
    cdef Py_ssize_t n = ex.shape[0]
    cdef cnp.uint8_t[:, :] fr = free
    cdef cnp.uint8_t[:, :] oc = occ
    cdef double[:] exs = ex
    cdef double[:] eys = ey
    cdef cnp.uint8_t[:] flags = occ_flag
    cdef double eps = 1e-6
    cdef long cx0 = <long>floor((x0 - ox) / res + eps)
    cdef long cy0 = <long>floor((y0 - oy) / res + eps)
    cdef Py_ssize_t i
    cdef long cx1, cy1, cx, cy, stepx, stepy, steps, s
    cdef double dxr, dyr, tdx, tdy, tmx, tmy, bx, by
    for i in range(n):
        cx1 = <long>floor((exs[i] - ox) / res + eps)
        cy1 = <long>floor((eys[i] - oy) / res + eps)
        cx = cx0
        cy = cy0
        dxr = exs[i] - x0
        dyr = eys[i] - y0
        stepx = 1 if dxr > 0 else -1
        stepy = 1 if dyr > 0 else -1
        tdx = fabs(res / dxr) if dxr != 0.0 else INF
        tdy = fabs(res / dyr) if dyr != 0.0 else INF
        bx = ox + (cx0 + (1 if stepx > 0 else 0)) * res
        by = oy + (cy0 + (1 if stepy > 0 else 0)) * res
        tmx = (bx - x0) / dxr if dxr != 0.0 else INF
        tmy = (by - y0) / dyr if dyr != 0.0 else INF
        steps = (cx1 - cx0 if cx1 >= cx0 else cx0 - cx1) + \
                (cy1 - cy0 if cy1 >= cy0 else cy0 - cy1) + 1
        for s in range(steps):
            if cx == cx1 and cy == cy1:
                break
            if 0 <= cx < w and 0 <= cy < h:
                fr[cy, cx] = 1
            if tmx <= tmy:
                cx += stepx
                tmx += tdx
            else:
                cy += stepy
                tmy += tdy
        if 0 <= cx1 < w and 0 <= cy1 < h:
            if flags[i]:
                oc[cy1, cx1] = 1
            else:
                fr[cy1, cx1] = 1


cdef inline void _heap_push(double[:] hf, double[:] hg, cnp.int64_t[:] hi,
                            Py_ssize_t* size, double f, double g, cnp.int64_t idx):
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t p
    hf[i] = f
    hg[i] = g
    hi[i] = idx
    size[0] += 1
    while i > 0:
        p = (i - 1) // 2
        if hf[p] > hf[i] or (hf[p] == hf[i] and (hg[p] > hg[i] or (hg[p] == hg[i] and hi[p] > hi[i]))):
            hf[p], hf[i] = hf[i], hf[p]
            hg[p], hg[i] = hg[i], hg[p]
            hi[p], hi[i] = hi[i], hi[p]
            i = p
        else:
            break


cdef inline void _heap_pop(double[:] hf, double[:] hg, cnp.int64_t[:] hi,
                           Py_ssize_t* size, double* f, double* g, cnp.int64_t* idx):
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t l, r, m, last
    f[0] = hf[0]
    g[0] = hg[0]
    idx[0] = hi[0]
    last = size[0] - 1
    hf[0] = hf[last]
    hg[0] = hg[last]
    hi[0] = hi[last]
    size[0] = last
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < last and (hf[l] < hf[m] or (hf[l] == hf[m] and (hg[l] < hg[m] or (hg[l] == hg[m] and hi[l] < hi[m])))):
            m = l
        if r < last and (hf[r] < hf[m] or (hf[r] == hf[m] and (hg[r] < hg[m] or (hg[r] == hg[m] and hi[r] < hi[m])))):
            m = r
        if m == i:
            break
        hf[m], hf[i] = hf[i], hf[m]
        hg[m], hg[i] = hg[i], hg[m]
        hi[m], hi[i] = hi[i], hi[m]
        i = m


def astar_grid(cnp.ndarray[cnp.uint8_t, ndim=2] cost,
               long sx, long sy, long gx, long gy):
    cdef Py_ssize_t h = cost.shape[0]
    cdef Py_ssize_t w = cost.shape[1]
    empty = np.zeros((0, 2), dtype=np.int64)
    if not (0 <= sx < w and 0 <= sy < h and 0 <= gx < w and 0 <= gy < h):
        return empty
    if cost[gy, gx] == 2:
        return empty

    cdef cnp.ndarray[cnp.float64_t, ndim=2] dist = np.full((h, w), INF)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] parent = np.full((h, w), -1, dtype=np.int64)
    cdef double[:, :] dv = dist
    cdef long long[:, :] pv = parent
    cdef cnp.uint8_t[:, :] cv = cost

    cdef Py_ssize_t cap = h * w * 8 + 16
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hf_a = np.zeros(cap)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hg_a = np.zeros(cap)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hi_a = np.zeros(cap, dtype=np.int64)
    cdef double[:] hf = hf_a
    cdef double[:] hg = hg_a
    cdef cnp.int64_t[:] hi = hi_a
    cdef Py_ssize_t size = 0

    cdef double SQ2 = sqrt(2.0)
    cdef long[8] dxs = [1, -1, 0, 0, 1, 1, -1, -1]
    cdef long[8] dys = [0, 0, 1, -1, 1, -1, 1, -1]
    cdef double[8] base = [1.0, 1.0, 1.0, 1.0, SQ2, SQ2, SQ2, SQ2]

    dv[sy, sx] = 0.0
    _heap_push(hf, hg, hi, &size, hypot(gx - sx, gy - sy), 0.0, sx * h + sy)

    cdef double f, g, ng
    cdef cnp.int64_t idx
    cdef long x, y, nx, ny, k
    cdef cnp.uint8_t c
    while size > 0:
        _heap_pop(hf, hg, hi, &size, &f, &g, &idx)
        x = idx // h
        y = idx % h
        if g > dv[y, x]:
            continue
        if x == gx and y == gy:
            break
        for k in range(8):
            nx = x + dxs[k]
            ny = y + dys[k]
            if nx < 0 or nx >= w or ny < 0 or ny >= h:
                continue
            c = cv[ny, nx]
            if c == 2:
                continue
            ng = g + base[k] * (2.0 if c == 1 else 1.0)
            if ng < dv[ny, nx]:
                dv[ny, nx] = ng
                pv[ny, nx] = y * w + x
                _heap_push(hf, hg, hi, &size, ng + hypot(gx - nx, gy - ny), ng, nx * h + ny)

    if dist[gy, gx] == INF:
        return empty
    path = []
    cdef long cx = gx, cy = gy, p
    while True:
        path.append((cx, cy))
        if cx == sx and cy == sy:
            break
        p = pv[cy, cx]
        cx = p % w
        cy = p // w
    path.reverse()
    return np.array(path, dtype=np.int64)


def dwa_evaluate(cnp.ndarray[cnp.float64_t, ndim=1] vs,
                 cnp.ndarray[cnp.float64_t, ndim=1] ws,
                 double x, double y, double theta,
                 double horizon, double dt,
                 cnp.ndarray[cnp.float64_t, ndim=2] obstacles,
                 cnp.ndarray[cnp.uint8_t, ndim=2] blocked,
                 cnp.ndarray[cnp.float64_t, ndim=1] box,
                 double footprint,
                 double lookx, double looky,
                 double w_progress, double w_heading, double w_clear,
                 double clear_cap):
    cdef Py_ssize_t k = vs.shape[0]
    cdef Py_ssize_t steps = <Py_ssize_t>(horizon / dt + 0.5)
    if steps < 1:
        steps = 1
    cdef Py_ssize_t nobs = obstacles.shape[0]
    cdef Py_ssize_t gh = blocked.shape[0]
    cdef Py_ssize_t gw = blocked.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] scores = np.zeros(k)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] collides = np.zeros(k, dtype=np.uint8)
    cdef double[:] sc = scores
    cdef cnp.uint8_t[:] col = collides
    cdef double[:] vv = vs
    cdef double[:] wv = ws
    cdef double[:, :] obs = obstacles
    cdef cnp.uint8_t[:, :] bl = blocked
    cdef double ox = box[0] if box.shape[0] else 0.0
    cdef double oy = box[1] if box.shape[0] else 0.0
    cdef double res = box[2] if box.shape[0] else 1.0
    cdef Py_ssize_t i, s, j
    cdef double v, w, t, th, px, py, dmin, d, clearance, endx, endy, endth
    cdef double progress, to_look, herr, cl
    cdef long cxi, cyi
    cdef bint hit
    for i in range(k):
        v = vv[i]
        w = wv[i]
        dmin = INF
        hit = False
        endx = x
        endy = y
        endth = theta
        for s in range(1, steps + 1):
            t = s * dt
            th = theta + w * t
            if fabs(w) < 1e-9:
                px = x + v * t * cos(theta)
                py = y + v * t * sin(theta)
            else:
                px = x + v / w * (sin(th) - sin(theta))
                py = y - v / w * (cos(th) - cos(theta))
            for j in range(nobs):
                d = sqrt((px - obs[j, 0]) * (px - obs[j, 0]) + (py - obs[j, 1]) * (py - obs[j, 1]))
                if d < dmin:
                    dmin = d
            if gh > 0 and gw > 0:
                cxi = <long>floor((px - ox) / res + 1e-6)
                cyi = <long>floor((py - oy) / res + 1e-6)
                if 0 <= cxi < gw and 0 <= cyi < gh and bl[cyi, cxi] > 0:
                    hit = True
            endx = px
            endy = py
            endth = th
        clearance = clear_cap
        if nobs > 0:
            if dmin < footprint:
                hit = True
            if dmin - footprint < clearance:
                clearance = dmin - footprint
        col[i] = 1 if hit else 0
        progress = -sqrt((endx - lookx) * (endx - lookx) + (endy - looky) * (endy - looky))
        to_look = atan2(looky - endy, lookx - endx)
        herr = fabs(atan2(sin(to_look - endth), cos(to_look - endth)))
        cl = clearance
        if cl < 0.0:
            cl = 0.0
        if cl > clear_cap:
            cl = clear_cap
        sc[i] = w_progress * progress - w_heading * herr + w_clear * cl
    return scores, collides
