"""Synthetic paintings and a forward model of the polarized gloss capture.

The forward model is built as the exact inverse of ``correct_gloss``: the
specular difference I1 - I2 at pixel J equals ``rho_s * e(J) / f(J)`` (times
shadow visibility and an off-specular lobe), so correction recovers a
geometry-free ``rho_s``. The split between the two captures follows the
Fresnel ratio Rs : Rp at the pixel's mirror angle, which leaks the
unpolarized residual into I2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .extraction import PolarizedPair, correction_maps
from .geometry import ScannerConfig, geometry_maps
from .masking import HeightMap, shadow_mask, surface_tilt
from .optics import OpticalMedium, fresnel

LOBE_SIGMA = math.radians(8.0)
DIFFUSE_FACTOR = 0.5  # polarizer passes half of unpolarized light
SPECULAR_GAIN = 0.4
ENERGY_LIMIT = 1.5

HEIGHT_PRIMITIVES = ("constant", "ramp", "step", "bumps", "texture", "disks", "stripes")
ALBEDO_PRIMITIVES = ("constant", "ramp", "step", "texture", "disks", "stripes")


@dataclass(frozen=True)
class SyntheticScene:
    height: HeightMap
    rho_d: np.ndarray  # (h, w, 3) in [0, 1]
    rho_s: np.ndarray  # (h, w) >= 0
    media: OpticalMedium = field(default_factory=OpticalMedium)
    config: ScannerConfig = field(default_factory=ScannerConfig)

    def __post_init__(self):
        shape = self.height.values.shape
        if self.rho_d.shape != shape + (3,) or self.rho_s.shape != shape:
            raise ValueError("scene rasters must share one shape")
        if not np.all(np.isfinite(self.rho_s)):
            raise ValueError("rho_s must be finite")

    @property
    def shape(self):
        return self.height.values.shape


@dataclass(frozen=True)
class GroundTruth:
    rho_s: np.ndarray
    height: HeightMap
    shadow: np.ndarray
    lobe: np.ndarray
    specular_factor: np.ndarray  # e / f: what the correction divides out
    i1_specular: np.ndarray
    i2_specular: np.ndarray
    clamped: int  # pixels clipped at 0 after noise


def default_scene_spec(width: int = 256, height: int = 128, seed: int = 0) -> dict:
    """Gently textured painting with raised impasto dabs and slowly varying gloss.

    The dabs are plateaus with sharp edges, so every off-specular pixel falls
    inside the normal or shadow mask. Pattern sizes scale with ``width``; the
    gloss varies smoothly enough for local-maximum infill to stay close.
    """
    w = max(width, 16)
    return {
        "width": width,
        "height": height,
        "seed": seed,
        "height_map": [
            {"type": "texture", "amplitude": 0.004, "scale_px": max(4, w // 6), "octaves": 3},
            {"type": "disks", "count": 10, "radius_px": max(3, w // 50), "value": 0.25},
        ],
        "rho_d": [
            {"type": "constant", "value": [0.55, 0.45, 0.3]},
            {"type": "texture", "amplitude": [0.2, 0.2, 0.15], "scale_px": max(4, w // 8), "octaves": 2},
        ],
        "rho_s": [
            {"type": "constant", "value": 0.3},
            {"type": "texture", "amplitude": 0.06, "scale_px": max(4, (4 * w) // 5), "octaves": 1},
            {"type": "disks", "count": 1, "radius_px": max(4, w // 4), "value": 0.2, "edge_px": max(4, w // 2)},
            {"type": "stripes", "period_px": 2 * w, "value": 0.12, "axis": "x", "edge_px": max(4, w // 2)},
        ],
    }


def _value_noise(shape, scale_px, octaves, persistence, rng):
    h, w = shape
    out = np.zeros(shape)
    amp, total = 1.0, 0.0
    scale = float(scale_px)
    yy = np.arange(h)
    xx = np.arange(w)
    for _ in range(max(1, int(octaves))):
        gh = int(math.ceil(h / scale)) + 2
        gw = int(math.ceil(w / scale)) + 2
        lattice = rng.uniform(-1.0, 1.0, size=(gh, gw))
        fy, fx = yy / scale, xx / scale
        iy, ix = fy.astype(int), fx.astype(int)
        ty, tx = fy - iy, fx - ix
        sy = ty * ty * (3 - 2 * ty)
        sx = tx * tx * (3 - 2 * tx)
        a = lattice[np.ix_(iy, ix)]
        b = lattice[np.ix_(iy, ix + 1)]
        c = lattice[np.ix_(iy + 1, ix)]
        d = lattice[np.ix_(iy + 1, ix + 1)]
        top = a + (b - a) * sx[None, :]
        bot = c + (d - c) * sx[None, :]
        out += amp * (top + (bot - top) * sy[:, None])
        total += amp
        amp *= persistence
        scale = max(scale / 2.0, 1.0)
    return out / total


def _axis_coord(shape, axis):
    h, w = shape
    if axis == "x":
        return np.broadcast_to(np.arange(w, dtype=float)[None, :], shape), w
    if axis == "y":
        return np.broadcast_to(np.arange(h, dtype=float)[:, None], shape), h
    raise ConfigError(f"axis must be 'x' or 'y', got {axis!r}")


def _primitive(p: dict, shape, pitch_mm: float, rng, channels: int | None, is_height: bool):
    kind = p.get("type")
    allowed = HEIGHT_PRIMITIVES if is_height else ALBEDO_PRIMITIVES
    if kind not in allowed:
        raise ConfigError(f"unknown primitive {kind!r}; expected one of {allowed}")

    def per_channel(value, fn):
        if channels is None:
            return fn(float(value))
        vals = value if isinstance(value, (list, tuple)) else [value] * channels
        if len(vals) != channels:
            raise ConfigError(f"expected {channels} channel values, got {len(vals)}")
        return np.stack([fn(float(v)) for v in vals], axis=-1)

    if kind == "constant":
        return per_channel(p.get("value", 0.0), lambda v: np.full(shape, v))
    if kind == "ramp":
        coord, n = _axis_coord(shape, p.get("axis", "x"))
        if "slope_deg" in p:
            base = coord * pitch_mm * math.tan(math.radians(p["slope_deg"]))
            return per_channel(1.0, lambda v: v * base)
        frac = coord / max(n - 1, 1)
        start, stop = p.get("start", 0.0), p.get("stop", 1.0)
        if channels is None:
            return start + (stop - start) * frac
        s = start if isinstance(start, (list, tuple)) else [start] * channels
        e = stop if isinstance(stop, (list, tuple)) else [stop] * channels
        return np.stack([a + (b - a) * frac for a, b in zip(s, e)], axis=-1)
    if kind == "step":
        coord, n = _axis_coord(shape, p.get("axis", "x"))
        edge = p.get("position", 0.5) * n
        inside = coord >= edge
        return per_channel(p.get("delta", p.get("value", 0.0)), lambda v: np.where(inside, v, 0.0))
    if kind == "texture":
        amp = p.get("amplitude", 0.1)

        def noise(v):
            return v * _value_noise(shape, p.get("scale_px", 16), p.get("octaves", 3), p.get("persistence", 0.5), rng)

        return per_channel(amp, noise)
    if kind == "bumps":
        h, w = shape
        count = int(p.get("count", 4))
        sigma = float(p.get("sigma_px", 8.0))
        ys = rng.uniform(0, h, size=count)
        xs = rng.uniform(0, w, size=count)
        yy, xx = np.mgrid[0:h, 0:w]
        acc = np.zeros(shape)
        for cy, cx in zip(ys, xs):
            acc += np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma * sigma))
        return per_channel(p.get("amplitude", 0.1), lambda v: v * acc)
    if kind == "disks":
        h, w = shape
        count = int(p.get("count", 4))
        radius = float(p.get("radius_px", 10.0))
        ys = rng.uniform(0, h, size=count)
        xs = rng.uniform(0, w, size=count)
        edge = float(p.get("edge_px", 0.0))
        yy, xx = np.mgrid[0:h, 0:w]
        cover = np.zeros(shape)
        for cy, cx in zip(ys, xs):
            inside_dist = radius - np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
            cover = np.maximum(cover, _soft_edge(inside_dist, edge))
        return per_channel(p.get("value", 0.5), lambda v: v * cover)
    # stripes
    coord, _ = _axis_coord(shape, p.get("axis", "x"))
    period = float(p.get("period_px", 20.0))
    on_len = float(p.get("duty", 0.5)) * period
    phase = np.mod(coord, period)
    inside_dist = np.where(phase < on_len, np.minimum(phase, on_len - phase),
                           -np.minimum(phase - on_len, period - phase))
    cover = _soft_edge(inside_dist, float(p.get("edge_px", 0.0)))
    return per_channel(p.get("value", 0.5), lambda v: v * cover)


def _soft_edge(inside_dist, edge):
    """1 inside, 0 outside; smoothstep over ``edge`` pixels centred on the boundary."""
    if edge <= 0:
        return (inside_dist >= 0).astype(float)
    t = np.clip(0.5 + inside_dist / edge, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _layer(prims, shape, pitch_mm, seed, slot, channels, is_height):
    full = shape + ((channels,) if channels else ())
    acc = np.zeros(full)
    for i, p in enumerate(prims or []):
        rng = np.random.default_rng([int(seed), slot, i])
        acc = acc + _primitive(p, shape, pitch_mm, rng, channels, is_height)
    return acc


SCENE_KEYS = {"width", "height", "seed", "pixel_pitch_um", "scanner", "height_map", "rho_d", "rho_s"}


def make_scene(spec: dict, seed: int | None = None) -> SyntheticScene:
    """Build a deterministic scene from a JSON-style description.

    Each of ``height_map`` (mm), ``rho_d`` (RGB) and ``rho_s`` is a list of
    primitives that are summed. ``seed`` overrides ``spec["seed"]``.
    """
    unknown = set(spec) - SCENE_KEYS
    if unknown:
        raise ConfigError(f"unknown scene keys: {sorted(unknown)}")
    width, height = int(spec.get("width", 256)), int(spec.get("height", 128))
    if width < 2 or height < 2:
        raise ConfigError("scene must be at least 2x2")
    seed = int(spec.get("seed", 0) if seed is None else seed)
    config = ScannerConfig.from_dict(spec["scanner"]) if spec.get("scanner") else ScannerConfig()
    pitch_um = spec.get("pixel_pitch_um") or config.tile_width * 1000.0 / width
    pitch_mm = pitch_um / 1000.0
    shape = (height, width)
    hvals = _layer(spec.get("height_map"), shape, pitch_mm, seed, 0, None, True)
    rho_d = np.clip(_layer(spec.get("rho_d"), shape, pitch_mm, seed, 1, 3, False), 0.0, 1.0)
    rho_s = np.maximum(_layer(spec.get("rho_s"), shape, pitch_mm, seed, 2, None, False), 0.0)
    return SyntheticScene(HeightMap(hvals, pitch_um), rho_d, rho_s, config.media, config)


def rotate_scene(scene: SyntheticScene, quarter_turns: int) -> SyntheticScene:
    """Rotate the painting counter-clockwise by ``quarter_turns`` * 90 degrees."""
    k = quarter_turns % 4
    return SyntheticScene(
        HeightMap(np.ascontiguousarray(np.rot90(scene.height.values, k)), scene.height.pixel_pitch),
        np.ascontiguousarray(np.rot90(scene.rho_d, k, axes=(0, 1))),
        np.ascontiguousarray(np.rot90(scene.rho_s, k)),
        scene.media,
        scene.config,
    )


def render_pair(
    scene: SyntheticScene,
    noise_sigma: float = 0.0,
    seed: int = 0,
    specular_gain: float = SPECULAR_GAIN,
    lobe_sigma: float = LOBE_SIGMA,
    light_from: str = "right",
):
    """Forward-render the two polarized captures of a scene.

    Sensor noise is additive Gaussian with standard deviation ``noise_sigma``
    in linear units, drawn once per pixel and capture and shared by the three
    colour channels (luminance noise).

    Returns ``(PolarizedPair, GroundTruth)``.
    """
    h, w = scene.shape
    config = scene.config
    if scene.media != config.media:
        config = _with_media(config, scene.media)
    geom = geometry_maps(config, w, h, pixel_pitch_um=scene.height.pixel_pitch)
    corr = correction_maps(geom, config)
    factor = corr.e_map / corr.f_map
    coeffs = fresnel(geom.theta_j, config.media)
    rs, rp = np.asarray(coeffs.rs), np.asarray(coeffs.rp)
    diff = rs - rp

    shadow = shadow_mask(scene.height, config.theta_mount, light_from)
    tilt = surface_tilt(scene.height)
    lobe = np.exp(-((tilt / lobe_sigma) ** 2))
    energy = specular_gain * scene.rho_s * factor * lobe * (~shadow)
    s1 = energy * rs / diff
    s2 = energy * rp / diff

    diffuse = DIFFUSE_FACTOR * scene.rho_d
    i1 = diffuse + s1[..., None]
    i2 = diffuse + s2[..., None]
    clamped = 0
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        i1 = i1 + noise_sigma * rng.standard_normal((h, w))[..., None]
        i2 = i2 + noise_sigma * rng.standard_normal((h, w))[..., None]
        clamped = int(np.count_nonzero(i1 < 0) + np.count_nonzero(i2 < 0))
        i1 = np.maximum(i1, 0.0)
        i2 = np.maximum(i2, 0.0)
    truth = GroundTruth(scene.rho_s, scene.height, shadow, lobe, factor, s1, s2, clamped)
    return PolarizedPair(i1, i2), truth


def _with_media(config: ScannerConfig, media: OpticalMedium) -> ScannerConfig:
    d = config.to_dict()
    d["media"] = media.to_dict()
    return ScannerConfig.from_dict(d)


def render_color(scene: SyntheticScene, vignette: float = 0.25, reference_albedo: float = 0.95):
    """Cross-polarized colour capture with radial vignetting, plus its white reference."""
    h, w = scene.shape
    yy, xx = np.mgrid[0:h, 0:w]
    r2 = ((yy - (h - 1) / 2) / max(h, 1)) ** 2 + ((xx - (w - 1) / 2) / max(w, 1)) ** 2
    v = 1.0 - vignette * r2 / 0.5
    color = scene.rho_d * v[..., None]
    white = np.repeat((reference_albedo * v)[..., None], 3, axis=-1)
    return color, white


@dataclass(frozen=True)
class CutTile:
    grid_pos: tuple[int, int]  # (row, col)
    nominal_offset: tuple[int, int]  # (x, y) of top-left in the master raster
    true_offset: tuple[int, int]
    data: object  # ndarray or SyntheticScene

    @property
    def jitter(self) -> tuple[int, int]:
        return self.true_offset[0] - self.nominal_offset[0], self.true_offset[1] - self.nominal_offset[1]


def tile_layout(master_shape, grid, overlap: float, jitter: int = 0):
    """Tile size and nominal top-left offsets for an R x C grid over a master raster."""
    rows, cols = grid
    H, W = master_shape[:2]
    if rows < 1 or cols < 1 or not 0 <= overlap < 1:
        raise ConfigError("grid must be >= 1x1 and overlap in [0, 1)")
    tw = int(round((W - 2 * jitter) / (1 + (cols - 1) * (1 - overlap))))
    th = int(round((H - 2 * jitter) / (1 + (rows - 1) * (1 - overlap))))
    if tw < 2 or th < 2 or tw > W - 2 * jitter or th > H - 2 * jitter:
        raise ConfigError(f"grid {rows}x{cols} with jitter {jitter} overflows a {H}x{W} raster")
    xs = np.round(np.linspace(jitter, W - jitter - tw, cols)).astype(int) if cols > 1 else np.array([jitter])
    ys = np.round(np.linspace(jitter, H - jitter - th, rows)).astype(int) if rows > 1 else np.array([jitter])
    return (th, tw), [[(int(xs[c]), int(ys[r])) for c in range(cols)] for r in range(rows)]


def _slice(obj, x, y, tw, th):
    if isinstance(obj, SyntheticScene):
        return SyntheticScene(
            HeightMap(obj.height.values[y:y + th, x:x + tw].copy(), obj.height.pixel_pitch),
            obj.rho_d[y:y + th, x:x + tw].copy(),
            obj.rho_s[y:y + th, x:x + tw].copy(),
            obj.media,
            obj.config,
        )
    return np.asarray(obj)[y:y + th, x:x + tw].copy()


def cut_tiles(master, grid, overlap: float = 0.3, jitter: int = 0, seed: int = 0) -> list[CutTile]:
    """Cut overlapping tiles out of a raster or scene.

    With ``jitter > 0`` every tile's true position deviates from its nominal
    grid position by a seeded integer offset in [-jitter, jitter] per axis.
    """
    shape = master.shape if isinstance(master, SyntheticScene) else np.asarray(master).shape
    (th, tw), nominal = tile_layout(shape, grid, overlap, jitter)
    rng = np.random.default_rng(seed)
    tiles = []
    for r, row in enumerate(nominal):
        for c, (x, y) in enumerate(row):
            if jitter:
                jx, jy = (int(v) for v in rng.integers(-jitter, jitter + 1, size=2))
            else:
                jx = jy = 0
            tx, ty = x + jx, y + jy
            tiles.append(CutTile((r, c), (x, y), (tx, ty), _slice(master, tx, ty, tw, th)))
    return tiles
