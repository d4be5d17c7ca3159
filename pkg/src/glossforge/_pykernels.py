"""Pure-Python implementations of the hot loops.

These mirror ``_ckernels.pyx`` operation for operation so that both backends
produce bit-identical results. They are used when the extension module is not
built, or when ``GLOSSFORGE_PURE_PYTHON=1`` is set.
"""

import numpy as np
from scipy.ndimage import maximum_filter1d

_W_NEXT = 7.0 / 16.0
_W_BACK = 3.0 / 16.0
_W_DOWN = 5.0 / 16.0
_W_DIAG = 1.0 / 16.0


def error_diffuse(target, thresholds):
    """Serpentine Floyd-Steinberg binarization with per-pixel thresholds."""
    target = np.ascontiguousarray(target, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    h, w = target.shape
    out = np.zeros((h, w), dtype=np.uint8)
    cur = [0.0] * w
    nxt = [0.0] * w
    tgt = target.tolist()
    thr = thresholds.tolist()
    for y in range(h):
        row_t = tgt[y]
        row_thr = thr[y]
        row_out = [0] * w
        if y % 2 == 0:
            xs = range(w)
            step = 1
        else:
            xs = range(w - 1, -1, -1)
            step = -1
        for x in xs:
            v = row_t[x] + cur[x]
            if v > row_thr[x]:
                row_out[x] = 1
                e = v - 1.0
            else:
                e = v
            xn = x + step
            xb = x - step
            if 0 <= xn < w:
                cur[xn] += e * _W_NEXT
                nxt[xn] += e * _W_DIAG
            if 0 <= xb < w:
                nxt[xb] += e * _W_BACK
            nxt[x] += e * _W_DOWN
        out[y] = row_out
        cur = nxt
        nxt = [0.0] * w
    return out


def vector_error_diffuse(shares):
    """Pick one class per pixel so that local class frequencies follow ``shares``.

    ``shares`` has shape (h, w, k) with rows summing to 1. The chosen class is
    the argmax of share plus diffused error (first index wins ties).
    """
    shares = np.ascontiguousarray(shares, dtype=np.float64)
    h, w, k = shares.shape
    out = np.zeros((h, w), dtype=np.uint8)
    cur = [[0.0] * k for _ in range(w)]
    nxt = [[0.0] * k for _ in range(w)]
    sh = shares.tolist()
    for y in range(h):
        row = sh[y]
        if y % 2 == 0:
            xs = range(w)
            step = 1
        else:
            xs = range(w - 1, -1, -1)
            step = -1
        for x in xs:
            acc = cur[x]
            s = row[x]
            best = 0
            best_v = s[0] + acc[0]
            vals = [best_v]
            for c in range(1, k):
                v = s[c] + acc[c]
                vals.append(v)
                if v > best_v:
                    best_v = v
                    best = c
            out[y, x] = best
            xn = x + step
            xb = x - step
            for c in range(k):
                e = vals[c] - (1.0 if c == best else 0.0)
                if 0 <= xn < w:
                    cur[xn][c] += e * _W_NEXT
                    nxt[xn][c] += e * _W_DIAG
                if 0 <= xb < w:
                    nxt[xb][c] += e * _W_BACK
                nxt[x][c] += e * _W_DOWN
        cur = nxt
        nxt = [[0.0] * k for _ in range(w)]
    return out


def disk_max_fill(values, mask, radius):
    """Replace masked pixels by the max unmasked value within a Euclidean disk.

    Returns ``(filled, found)``; ``found`` is False for masked pixels with no
    unmasked neighbour inside the disk (their value is left untouched).
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    mask = np.ascontiguousarray(mask, dtype=bool)
    r = int(radius)
    src = np.where(mask, -np.inf, values)
    h, w = src.shape
    best = np.full((h, w), -np.inf)
    # disk = union of horizontal segments; max over each row offset
    for dy in range(-r, r + 1):
        half = int(np.floor(np.sqrt(r * r - dy * dy)))
        y0, y1 = max(0, -dy), min(h, h - dy)
        if y0 >= y1:
            continue
        seg = maximum_filter1d(src[y0 + dy:y1 + dy], size=2 * half + 1, axis=1, mode="constant", cval=-np.inf)
        np.maximum(best[y0:y1], seg, out=best[y0:y1])
    found = ~mask | np.isfinite(best)
    filled = values.copy()
    take = mask & np.isfinite(best)
    filled[take] = best[take]
    return filled, found
