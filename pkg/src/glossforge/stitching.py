"""Registration and merging of overlapping tiles into a mosaic.

Offsets are integer pixel translations ``(dx, dy)`` of tile ``b``'s top-left
corner in tile ``a``'s pixel frame (x = column, y = row). Canvases carry NaN
where no tile contributes.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DegenerateError, RegistrationError, ShapeMismatchError
from .extraction import GlossMap, hsl_lightness
from .masking import HeightMap

log = logging.getLogger(__name__)


class FlatCostWarning(UserWarning):
    """Registration cost has no distinct minimum; the nominal offset was kept."""


@dataclass(frozen=True)
class StitchParams:
    search_window: int = 12
    color_weight: float = 0.5
    height_weight: float = 0.5
    blend_sigma: float = 16.0
    min_overlap: float = 0.1
    flat_contrast: float = 0.2


@dataclass
class Tile:
    color: np.ndarray
    height: HeightMap
    gloss: GlossMap
    grid_pos: tuple[int, int] = (0, 0)
    nominal_offset_px: tuple[int, int] = (0, 0)  # (x, y) from the scan plan

    def __post_init__(self):
        shape = self.height.values.shape
        if self.color.shape[:2] != shape or self.gloss.values.shape != shape:
            raise ShapeMismatchError(f"tile {self.grid_pos}: color, height and gloss shapes differ")

    @property
    def shape(self):
        return self.height.values.shape


@dataclass(frozen=True)
class Registration:
    dx: int
    dy: int
    cost: float
    flat: bool = False

    @property
    def offset(self) -> tuple[int, int]:
        return self.dx, self.dy


@dataclass(frozen=True)
class HeightAlignment:
    shift: float  # mean height added to b over the overlap
    slope: tuple[float, float]  # (per column, per row) added to b
    plane: tuple[float, float, float]  # a, b, c in b's pixel frame


@dataclass
class Mosaic:
    color: np.ndarray
    height: np.ndarray
    gloss: np.ndarray
    coverage: np.ndarray
    pixel_pitch: float
    transforms: dict = field(default_factory=dict)  # (row, col) -> {"offset": (x, y), "plane": (a, b, c)}
    pair_offsets: dict = field(default_factory=dict)  # ((r, c), (r, c)) -> (dx, dy)
    seams: list = field(default_factory=list)

    def manifest(self) -> dict:
        return {
            "shape": list(self.height.shape),
            "pixel_pitch_um": self.pixel_pitch,
            "tiles": [
                {"grid_pos": list(k), "offset": list(v["offset"]), "plane": list(v["plane"]), "own_plane": list(v["own_plane"])}
                for k, v in sorted(self.transforms.items())
            ],
            "pairs": [
                {"a": list(a), "b": list(b), "offset": list(off)} for (a, b), off in sorted(self.pair_offsets.items())
            ],
            "seams": self.seams,
        }


def _plane_design(xs, ys):
    return np.column_stack([xs, ys, np.ones_like(xs, dtype=float)])


def fit_plane(values, mask=None) -> tuple[float, float, float]:
    """Least-squares plane ``a*x + b*y + c`` over valid pixels (x = column, y = row).

    Accepts a ``HeightMap`` or array; NaN pixels and pixels where ``mask`` is
    False are ignored.
    """
    vals = np.asarray(getattr(values, "values", values), dtype=float)
    ok = np.isfinite(vals)
    if mask is not None:
        ok &= np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(ok)
    if xs.size < 3:
        raise DegenerateError("plane fit needs at least 3 samples")
    A = _plane_design(xs.astype(float), ys.astype(float))
    coef, _, rank, _ = np.linalg.lstsq(A, vals[ok], rcond=None)
    if rank < 3:
        raise DegenerateError("plane fit is rank deficient (samples are collinear)")
    return float(coef[0]), float(coef[1]), float(coef[2])


def plane_values(coeffs, shape, origin=(0, 0)) -> np.ndarray:
    """Evaluate a plane on a raster whose (0, 0) pixel sits at ``origin`` (x, y)."""
    a, b, c = coeffs
    h, w = shape
    x = np.arange(w) + origin[0]
    y = np.arange(h) + origin[1]
    return a * x[None, :] + b * y[:, None] + c


def detrend(values) -> np.ndarray:
    vals = np.asarray(getattr(values, "values", values), dtype=float)
    return vals - plane_values(fit_plane(vals), vals.shape)


def _overlap_slices(shape_a, shape_b, dx, dy):
    ha, wa = shape_a
    hb, wb = shape_b
    x0, x1 = max(0, dx), min(wa, dx + wb)
    y0, y1 = max(0, dy), min(ha, dy + hb)
    if x1 <= x0 or y1 <= y0:
        return None
    return (slice(y0, y1), slice(x0, x1)), (slice(y0 - dy, y1 - dy), slice(x0 - dx, x1 - dx))


def register_pair(a: Tile, b: Tile, search_window: int = 12, nominal=None,
                  color_weight: float = 0.5, height_weight: float = 0.5,
                  min_overlap: float = 0.1, flat_contrast: float = 0.2) -> Registration:
    """Exhaustive integer search for the offset of ``b`` relative to ``a``.

    The cost mixes colour lightness and detrended height: each term is a sum
    of squared differences divided by the overlap pixel count and the pooled
    variance of that channel over both tiles. For height the overlap mean
    difference is removed first, since adjacent scans may sit at different
    heights.

    A landscape whose minimum is not distinctly below its median is treated
    as flat: a ``FlatCostWarning`` is issued and the nominal offset returned.
    Exact ties go to the candidate nearest the nominal offset.
    """
    if nominal is None:
        nominal = (b.nominal_offset_px[0] - a.nominal_offset_px[0], b.nominal_offset_px[1] - a.nominal_offset_px[1])
    nx, ny = int(nominal[0]), int(nominal[1])
    la, lb = hsl_lightness(a.color), hsl_lightness(b.color)
    ha_, hb_ = detrend(a.height), detrend(b.height)
    var_c = 0.5 * (la.var() + lb.var()) + 1e-12
    var_h = 0.5 * (ha_.var() + hb_.var()) + 1e-12
    need = min_overlap * a.shape[0] * a.shape[1]

    cands, costs, sizes = [], [], []
    for dy in range(ny - search_window, ny + search_window + 1):
        for dx in range(nx - search_window, nx + search_window + 1):
            sl = _overlap_slices(a.shape, b.shape, dx, dy)
            if sl is None:
                continue
            sa, sb = sl
            n = (sa[0].stop - sa[0].start) * (sa[1].stop - sa[1].start)
            if n < need:
                continue
            dc = la[sa] - lb[sb]
            dh = ha_[sa] - hb_[sb]
            cost = color_weight * np.mean(dc * dc) / var_c + height_weight * np.var(dh) / var_h
            cands.append((dx, dy))
            costs.append(cost)
            sizes.append(n)
    if not cands:
        raise RegistrationError(
            f"tiles {a.grid_pos} and {b.grid_pos}: no candidate offset within +/-{search_window} px of "
            f"{(nx, ny)} overlaps at least {min_overlap:.0%} of the tile"
        )
    costs = np.asarray(costs)
    cmin = costs.min()
    med = float(np.median(costs))
    noise_floor = 5.0 * math.sqrt(2.0 / min(sizes))
    contrast = (med - cmin) / med if med > 0 else 0.0
    if len(cands) > 1 and contrast < max(flat_contrast, noise_floor):
        warnings.warn(
            f"tiles {a.grid_pos}/{b.grid_pos}: flat registration cost (contrast {contrast:.3f}); keeping nominal offset",
            FlatCostWarning,
            stacklevel=2,
        )
        if (nx, ny) in cands:
            return Registration(nx, ny, float(costs[cands.index((nx, ny))]), flat=True)
        return Registration(nx, ny, float("nan"), flat=True)
    tol = 1e-12 * max(1.0, abs(cmin))
    ties = [i for i in np.flatnonzero(costs <= cmin + tol)]
    best = min(ties, key=lambda i: ((cands[i][0] - nx) ** 2 + (cands[i][1] - ny) ** 2, cands[i][1], cands[i][0]))
    return Registration(cands[best][0], cands[best][1], float(costs[best]))


def align_height(a_height: np.ndarray, b_height: np.ndarray, offset):
    """Level ``b`` onto ``a`` using their overlap.

    The best-fit plane of the overlap difference (a - b) is added to all of
    ``b``, which matches the overlap means and removes any residual slope.
    NaN marks pixels outside either raster's coverage.

    Returns ``(corrected_b, HeightAlignment)``.
    """
    a_vals = np.asarray(getattr(a_height, "values", a_height), dtype=float)
    b_vals = np.asarray(getattr(b_height, "values", b_height), dtype=float)
    dx, dy = offset
    sl = _overlap_slices(a_vals.shape, b_vals.shape, dx, dy)
    if sl is None:
        raise DegenerateError("tiles do not overlap")
    sa, sb = sl
    diff_local = np.full(b_vals.shape, np.nan)
    diff_local[sb] = a_vals[sa] - b_vals[sb]
    try:
        coeffs = fit_plane(diff_local)
    except DegenerateError as exc:
        raise DegenerateError(f"overlap cannot determine a height plane: {exc}") from None
    corrected = b_vals + plane_values(coeffs, b_vals.shape)
    shift = float(np.nanmean(diff_local))
    return corrected, HeightAlignment(shift, (coeffs[0], coeffs[1]), coeffs)


def _valid(arr):
    return np.isfinite(arr if arr.ndim == 2 else arr[..., 0])


def _fade_weights(overlap, along_x: bool, b_after: bool):
    """Linear 0 -> 1 ramp across the overlap, per line, towards raster b."""
    ov = overlap if along_x else overlap.T
    h, w = ov.shape
    idx = np.arange(w, dtype=float)[None, :]
    big = np.where(ov, idx, np.inf).min(axis=1, keepdims=True)
    small = np.where(ov, idx, -np.inf).max(axis=1, keepdims=True)
    span = small - big
    with np.errstate(invalid="ignore", divide="ignore"):
        wts = np.where(span > 0, (idx - big) / np.where(span > 0, span, 1.0), 0.5)
    wts = np.clip(np.nan_to_num(wts, nan=0.5), 0.0, 1.0)
    if not b_after:
        wts = 1.0 - wts
    return wts if along_x else wts.T


def _low_pass(arr, overlap, sigma):
    """Gaussian low band computed from overlap pixels only (normalized convolution)."""
    ov = overlap.astype(float)
    if arr.ndim == 3:
        ov3 = ov[..., None]
        num = gaussian_filter(np.where(overlap[..., None], arr, 0.0), sigma=(sigma, sigma, 0), mode="constant")
        den = gaussian_filter(ov3, sigma=(sigma, sigma, 0), mode="constant")
    else:
        num = gaussian_filter(np.where(overlap, arr, 0.0), sigma=sigma, mode="constant")
        den = gaussian_filter(ov, sigma=sigma, mode="constant")
    with np.errstate(invalid="ignore", divide="ignore"):
        low = num / den
    return np.where(np.broadcast_to(overlap[..., None] if arr.ndim == 3 else overlap, arr.shape), low, np.nan)


def blend(a_raster, b_raster, offset, seam_axis: str = "vertical", sigma: float = 16.0,
          a_center=None, b_center=None):
    """Merge raster ``b`` (placed at ``offset`` in a's frame) into ``a``.

    In the overlap each raster is split into a low band (Gaussian, ``sigma``
    px) and a high band (residual). Low bands are cross-faded linearly across
    the overlap; the high band comes from whichever raster's centre is nearer.
    ``seam_axis="vertical"`` fades along x (side-by-side tiles), ``"horizontal"``
    fades along y (stacked rows).

    Returns ``(merged, origin)`` where ``origin`` is the (x, y) of merged's top
    left pixel in a's frame.
    """
    a = np.asarray(a_raster, dtype=float)
    b = np.asarray(b_raster, dtype=float)
    if a.ndim != b.ndim or a.shape[2:] != b.shape[2:]:
        raise ShapeMismatchError("rasters must have the same channel layout")
    if seam_axis not in ("vertical", "horizontal"):
        raise ValueError("seam_axis must be 'vertical' or 'horizontal'")
    dx, dy = int(offset[0]), int(offset[1])
    ha, wa = a.shape[:2]
    hb, wb = b.shape[:2]
    x0, y0 = min(0, dx), min(0, dy)
    x1, y1 = max(wa, dx + wb), max(ha, dy + hb)
    shape = (y1 - y0, x1 - x0) + a.shape[2:]
    A = np.full(shape, np.nan)
    B = np.full(shape, np.nan)
    A[-y0:-y0 + ha, -x0:-x0 + wa] = a
    B[dy - y0:dy - y0 + hb, dx - x0:dx - x0 + wb] = b
    va, vb = _valid(A), _valid(B)
    ov = va & vb

    out = np.where(np.broadcast_to((va & ~vb)[..., None] if A.ndim == 3 else va & ~vb, A.shape), A, B)
    if not ov.any():
        return out, (x0, y0)

    if a_center is None:
        ys, xs = np.nonzero(va)
        a_center = (xs.mean(), ys.mean())
    else:
        a_center = (a_center[0] - x0, a_center[1] - y0)
    if b_center is None:
        ys, xs = np.nonzero(vb)
        b_center = (xs.mean(), ys.mean())
    else:
        b_center = (b_center[0] - x0, b_center[1] - y0)

    along_x = seam_axis == "vertical"
    b_after = (b_center[0] > a_center[0]) if along_x else (b_center[1] > a_center[1])
    w = _fade_weights(ov, along_x, b_after)
    low_a = _low_pass(A, ov, sigma)
    low_b = _low_pass(B, ov, sigma)
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    near_a = (xx - a_center[0]) ** 2 + (yy - a_center[1]) ** 2 <= (xx - b_center[0]) ** 2 + (yy - b_center[1]) ** 2
    if A.ndim == 3:
        w = w[..., None]
        near_a = near_a[..., None]
        ovm = ov[..., None]
    else:
        ovm = ov
    high = np.where(near_a, A - low_a, B - low_b)
    merged = (1.0 - w) * low_a + w * low_b + high
    out = np.where(np.broadcast_to(ovm, A.shape), merged, out)
    return out, (x0, y0)


@dataclass
class _Canvas:
    color: np.ndarray
    height: np.ndarray
    gloss: np.ndarray
    origin: tuple[int, int]  # global (x, y) of pixel (0, 0)

    @property
    def shape(self):
        return self.height.shape


def _tile_canvas(tile: Tile, pos) -> _Canvas:
    return _Canvas(tile.color.astype(float), tile.height.values.astype(float), tile.gloss.values.astype(float), tuple(pos))


def _seam_gradient(height, overlap):
    gy, gx = np.gradient(np.where(np.isfinite(height), height, np.nan))
    g = np.hypot(gx, gy)
    vals = g[overlap & np.isfinite(g)]
    return float(vals.max()) if vals.size else 0.0


def _merge(canvas: _Canvas, other: _Canvas, seam_axis: str, sigma: float, a_center, b_center):
    """Align ``other``'s height onto ``canvas`` and blend all three channels."""
    off = (other.origin[0] - canvas.origin[0], other.origin[1] - canvas.origin[1])
    height_b, align = align_height(canvas.height, other.height, off)
    ac = (a_center[0] - canvas.origin[0], a_center[1] - canvas.origin[1])
    bc = (b_center[0] - canvas.origin[0], b_center[1] - canvas.origin[1])
    color, org = blend(canvas.color, other.color, off, seam_axis, sigma, ac, bc)
    height, _ = blend(canvas.height, height_b, off, seam_axis, sigma, ac, bc)
    gloss, _ = blend(canvas.gloss, other.gloss, off, seam_axis, sigma, ac, bc)
    origin = (canvas.origin[0] + org[0], canvas.origin[1] + org[1])
    # plane of the alignment in global coordinates
    a, b, c = align.plane
    gplane = (a, b, c - a * other.origin[0] - b * other.origin[1])
    merged = _Canvas(color, height, gloss, origin)
    ov = np.zeros(merged.shape, dtype=bool)
    sa = (slice(canvas.origin[1] - origin[1], canvas.origin[1] - origin[1] + canvas.shape[0]),
          slice(canvas.origin[0] - origin[0], canvas.origin[0] - origin[0] + canvas.shape[1]))
    sb = (slice(other.origin[1] - origin[1], other.origin[1] - origin[1] + other.shape[0]),
          slice(other.origin[0] - origin[0], other.origin[0] - origin[0] + other.shape[1]))
    ma = np.zeros(merged.shape, dtype=bool)
    ma[sa] = np.isfinite(canvas.height)
    ov[sb] = np.isfinite(other.height)
    ov &= ma
    return merged, gplane, align, ov


def _add_planes(p, q):
    return (p[0] + q[0], p[1] + q[1], p[2] + q[2])


def stitch(tiles, params: StitchParams | None = None) -> Mosaic:
    """Stitch a rectangular grid of tiles into a mosaic.

    ``tiles`` is a list of rows, or a flat list arranged by ``grid_pos``.

    Tiles are registered pairwise (neighbours within a row and within a
    column), merged left to right into rows, and the rows merged top to
    bottom. Heights are levelled at every merge; the finished mosaic is
    anchored to the best-fit plane frame of the centre tile.
    """
    params = params or StitchParams()
    tiles = list(tiles)
    if tiles and isinstance(tiles[0], Tile):
        by_pos = {t.grid_pos: t for t in tiles}
        nr = 1 + max(r for r, _ in by_pos)
        nc = 1 + max(c for _, c in by_pos)
        if len(by_pos) != len(tiles) or len(tiles) != nr * nc:
            raise ValueError("tiles must form a complete rectangular grid")
        tiles = [[by_pos[(r, c)] for c in range(nc)] for r in range(nr)]
    grid = [list(row) for row in tiles]
    rows, cols = len(grid), len(grid[0]) if grid else 0
    if rows == 0 or any(len(r) != cols for r in grid):
        raise ValueError("tiles must form a complete rectangular grid")
    pitch = grid[0][0].height.pixel_pitch

    def reg(a, b, where):
        try:
            return register_pair(a, b, params.search_window, None, params.color_weight, params.height_weight,
                                 params.min_overlap, params.flat_contrast)
        except RegistrationError as exc:
            raise RegistrationError(f"{where} {a.grid_pos}->{b.grid_pos}: {exc}") from None

    pair_offsets = {}
    for r in range(rows):
        for c in range(cols - 1):
            pair_offsets[((r, c), (r, c + 1))] = reg(grid[r][c], grid[r][c + 1], "row pair").offset
    for r in range(rows - 1):
        for c in range(cols):
            pair_offsets[((r, c), (r + 1, c))] = reg(grid[r][c], grid[r + 1][c], "column pair").offset

    pos = {}
    for r in range(rows):
        if r == 0:
            pos[(0, 0)] = (0, 0)
        else:
            px, py = pos[(r - 1, 0)]
            ox, oy = pair_offsets[((r - 1, 0), (r, 0))]
            pos[(r, 0)] = (px + ox, py + oy)
        for c in range(1, cols):
            px, py = pos[(r, c - 1)]
            ox, oy = pair_offsets[((r, c - 1), (r, c))]
            pos[(r, c)] = (px + ox, py + oy)
    for r in range(rows - 1):
        for c in range(1, cols):
            pred = (pos[(r + 1, c)][0] - pos[(r, c)][0], pos[(r + 1, c)][1] - pos[(r, c)][1])
            if pred != pair_offsets[((r, c), (r + 1, c))]:
                log.warning("loop closure mismatch at column %d rows %d/%d: chain %s vs direct %s",
                            c, r, r + 1, pred, pair_offsets[((r, c), (r + 1, c))])

    def center_of(key):
        t = grid[key[0]][key[1]]
        h, w = t.shape
        return pos[key][0] + (w - 1) / 2, pos[key][1] + (h - 1) / 2

    planes = {k: (0.0, 0.0, 0.0) for k in pos}
    seams = []
    row_canvases = []
    for r in range(rows):
        canvas = _tile_canvas(grid[r][0], pos[(r, 0)])
        for c in range(1, cols):
            nxt = _tile_canvas(grid[r][c], pos[(r, c)])
            canvas, gplane, align, ov = _merge(canvas, nxt, "vertical", params.blend_sigma,
                                               center_of((r, c - 1)), center_of((r, c)))
            planes[(r, c)] = gplane
            seams.append({"between": [[r, c - 1], [r, c]], "shift": align.shift,
                          "max_gradient": _seam_gradient(canvas.height, ov)})
        row_canvases.append(canvas)

    mosaic = row_canvases[0]
    for r in range(1, rows):
        row = row_canvases[r]
        ac = (mosaic.origin[0] + (mosaic.shape[1] - 1) / 2, mosaic.origin[1] + (mosaic.shape[0] - 1) / 2)
        if r > 1:
            # high band decision against the previous row only
            prev = row_canvases[r - 1]
            ac = (prev.origin[0] + (prev.shape[1] - 1) / 2, prev.origin[1] + (prev.shape[0] - 1) / 2)
        bc = (row.origin[0] + (row.shape[1] - 1) / 2, row.origin[1] + (row.shape[0] - 1) / 2)
        mosaic, gplane, align, ov = _merge(mosaic, row, "horizontal", params.blend_sigma, ac, bc)
        for c in range(cols):
            planes[(r, c)] = _add_planes(planes[(r, c)], gplane)
        seams.append({"between": [[r - 1, -1], [r, -1]], "shift": align.shift,
                      "max_gradient": _seam_gradient(mosaic.height, ov)})

    # anchor: the centre tile keeps its own height frame
    ck = (rows // 2, cols // 2)
    ct = grid[ck[0]][ck[1]]
    cx, cy = pos[ck][0] - mosaic.origin[0], pos[ck][1] - mosaic.origin[1]
    region = mosaic.height[cy:cy + ct.shape[0], cx:cx + ct.shape[1]]
    anchor_local = fit_plane(ct.height.values - region)
    a, b, c = anchor_local
    anchor = (a, b, c - a * pos[ck][0] - b * pos[ck][1])
    mosaic.height = mosaic.height + plane_values(anchor, mosaic.shape, mosaic.origin)

    transforms = {}
    for k in pos:
        t = grid[k[0]][k[1]]
        total = _add_planes(planes[k], anchor)
        transforms[k] = {
            "offset": (pos[k][0] - mosaic.origin[0], pos[k][1] - mosaic.origin[1]),
            "plane": total,
            "own_plane": fit_plane(t.height.values),
        }
    coverage = np.isfinite(mosaic.height)
    return Mosaic(
        color=mosaic.color,
        height=mosaic.height,
        gloss=mosaic.gloss,
        coverage=coverage,
        pixel_pitch=pitch,
        transforms=transforms,
        pair_offsets=pair_offsets,
        seams=seams,
    )
