# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_pykernels``.

Arithmetic order matches the Python fallback exactly; build without
floating-point contraction so results stay bit-identical.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, INFINITY

cnp.import_array()

cdef double W_NEXT = 7.0 / 16.0
cdef double W_BACK = 3.0 / 16.0
cdef double W_DOWN = 5.0 / 16.0
cdef double W_DIAG = 1.0 / 16.0


def error_diffuse(target, thresholds):
    cdef double[:, ::1] tgt = np.ascontiguousarray(target, dtype=np.float64)
    cdef double[:, ::1] thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef Py_ssize_t h = tgt.shape[0], w = tgt.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef double[::1] cur = np.zeros(w)
    cdef double[::1] nxt = np.zeros(w)
    cdef double[::1] tmp
    cdef Py_ssize_t y, i, x, xn, xb
    cdef int step
    cdef double v, e
    for y in range(h):
        step = 1 if y % 2 == 0 else -1
        for i in range(w):
            x = i if step == 1 else w - 1 - i
            v = tgt[y, x] + cur[x]
            if v > thr[y, x]:
                out[y, x] = 1
                e = v - 1.0
            else:
                e = v
            xn = x + step
            xb = x - step
            if 0 <= xn < w:
                cur[xn] += e * W_NEXT
                nxt[xn] += e * W_DIAG
            if 0 <= xb < w:
                nxt[xb] += e * W_BACK
            nxt[x] += e * W_DOWN
        tmp = cur
        cur = nxt
        nxt = tmp
        nxt[:] = 0.0
    return out_arr


def vector_error_diffuse(shares):
    cdef double[:, :, ::1] sh = np.ascontiguousarray(shares, dtype=np.float64)
    cdef Py_ssize_t h = sh.shape[0], w = sh.shape[1], k = sh.shape[2]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef double[:, ::1] cur = np.zeros((w, k))
    cdef double[:, ::1] nxt = np.zeros((w, k))
    cdef double[:, ::1] tmp
    cdef double[::1] vals = np.zeros(k)
    cdef Py_ssize_t y, i, x, xn, xb, c, best
    cdef int step
    cdef double v, best_v, e
    for y in range(h):
        step = 1 if y % 2 == 0 else -1
        for i in range(w):
            x = i if step == 1 else w - 1 - i
            best = 0
            best_v = sh[y, x, 0] + cur[x, 0]
            vals[0] = best_v
            for c in range(1, k):
                v = sh[y, x, c] + cur[x, c]
                vals[c] = v
                if v > best_v:
                    best_v = v
                    best = c
            out[y, x] = <unsigned char>best
            xn = x + step
            xb = x - step
            for c in range(k):
                e = vals[c] - (1.0 if c == best else 0.0)
                if 0 <= xn < w:
                    cur[xn, c] += e * W_NEXT
                    nxt[xn, c] += e * W_DIAG
                if 0 <= xb < w:
                    nxt[xb, c] += e * W_BACK
                nxt[x, c] += e * W_DOWN
        tmp = cur
        cur = nxt
        nxt = tmp
        nxt[:, :] = 0.0
    return out_arr


cdef void _run_max(double* src, double* out, double* g, double* hb, Py_ssize_t w, long half) noexcept nogil:
    """out[x] = max(src[x - half .. x + half]) clipped to the row (van Herk / Gil-Werman)."""
    cdef Py_ssize_t k = 2 * half + 1
    cdef Py_ssize_t n = w + 2 * half
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(n):
        j = i - half
        v = src[j] if 0 <= j < w else -INFINITY
        if i % k == 0 or v > g[i - 1]:
            g[i] = v
        else:
            g[i] = g[i - 1]
    for i in range(n - 1, -1, -1):
        j = i - half
        v = src[j] if 0 <= j < w else -INFINITY
        if i == n - 1 or (i + 1) % k == 0 or v > hb[i + 1]:
            hb[i] = v
        else:
            hb[i] = hb[i + 1]
    for i in range(w):
        out[i] = hb[i] if hb[i] > g[i + k - 1] else g[i + k - 1]


def disk_max_fill(values, mask, radius):
    cdef double[:, ::1] val = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.npy_bool[:, ::1] msk = np.ascontiguousarray(mask, dtype=bool)
    cdef Py_ssize_t h = val.shape[0], w = val.shape[1]
    cdef long r = int(radius)
    filled_arr = np.array(val, copy=True)
    found_arr = np.ones((h, w), dtype=bool)
    cdef double[:, ::1] filled = filled_arr
    cdef cnp.npy_bool[:, ::1] found = found_arr
    cdef Py_ssize_t y, x, yy, xx, x0, x1, t
    cdef long dy, half
    cdef double best, v
    cdef Py_ssize_t nmask = int(np.count_nonzero(mask))
    # direct scan costs ~pi r^2 per masked pixel, row scans ~6 (r + 1) per pixel
    if nmask * 3.2 * (r + 1) * (r + 1) <= 6.0 * (r + 1) * h * w:
        for y in range(h):
            for x in range(w):
                if not msk[y, x]:
                    continue
                best = -INFINITY
                for dy in range(-r, r + 1):
                    yy = y + dy
                    if yy < 0 or yy >= h:
                        continue
                    half = <long>floor(sqrt(<double>(r * r - dy * dy)))
                    x0 = x - half
                    x1 = x + half
                    if x0 < 0:
                        x0 = 0
                    if x1 > w - 1:
                        x1 = w - 1
                    for xx in range(x0, x1 + 1):
                        if not msk[yy, xx] and val[yy, xx] > best:
                            best = val[yy, xx]
                if best == -INFINITY:
                    found[y, x] = False
                else:
                    filled[y, x] = best
        return filled_arr, found_arr

    src_arr = np.where(mask, -np.inf, np.asarray(val))
    best_arr = np.full((h, w), -np.inf)
    need_arr = np.ascontiguousarray(np.asarray(mask, dtype=bool).any(axis=1))
    cdef double[:, ::1] src = src_arr
    cdef double[:, ::1] bst = best_arr
    cdef cnp.npy_bool[::1] need = need_arr
    cdef double[::1] row = np.empty(w)
    cdef double[::1] g = np.empty(w + 2 * r + 1)
    cdef double[::1] hb = np.empty(w + 2 * r + 1)
    cdef Py_ssize_t targets[2]
    cdef int nt, ti
    for dy in range(0, r + 1):
        half = <long>floor(sqrt(<double>(r * r - dy * dy)))
        for yy in range(h):
            nt = 0
            t = yy - dy
            if 0 <= t < h and need[t]:
                targets[nt] = t
                nt += 1
            t = yy + dy
            if dy > 0 and 0 <= t < h and need[t]:
                targets[nt] = t
                nt += 1
            if nt == 0:
                continue
            _run_max(&src[yy, 0], &row[0], &g[0], &hb[0], w, half)
            for ti in range(nt):
                t = targets[ti]
                for x in range(w):
                    v = row[x]
                    if msk[t, x] and v > bst[t, x]:
                        bst[t, x] = v
    for y in range(h):
        if not need[y]:
            continue
        for x in range(w):
            if msk[y, x]:
                if bst[y, x] == -INFINITY:
                    found[y, x] = False
                else:
                    filled[y, x] = bst[y, x]
    return filled_arr, found_arr
