"""Per-pixel mirror geometry of the gloss capture module.

Coordinate frame: the painting is the plane z = 0 with the tile centre B at
the origin. Columns run along +x from the camera side (edge A) to the lamp
side (edge C); rows run along y. The camera optical centre O sits at distance
``m`` from B, tilted by ``theta_mount`` towards -x. The lamp faces B from
distance ``k`` on the +x side; mirroring it through z = 0 gives a virtual
lamp plane so that every mirror path O -> J -> lamp is a straight line
O -> J -> virtual lamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, GeometryError
from .optics import OpticalMedium

DEFAULT_MOUNT_DEG = 56.3


@dataclass(frozen=True)
class ScannerConfig:
    theta_mount: float = math.radians(DEFAULT_MOUNT_DEG)
    lamp_distance_k: float = 450.0  # mm
    camera_distance_m: float = 450.0  # mm
    tile_width: float = 180.0  # mm
    tile_height: float = 90.0  # mm
    pixel_pitch: float = 25.0  # um
    lamp_size: float = 280.0  # mm, square emitting area
    media: OpticalMedium = field(default_factory=OpticalMedium)

    def __post_init__(self):
        for name in ("lamp_distance_k", "camera_distance_m", "tile_width", "tile_height", "pixel_pitch", "lamp_size"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 < self.theta_mount < math.pi / 2:
            raise ConfigError("theta_mount must lie in (0, pi/2)")

    @property
    def native_shape(self) -> tuple[int, int]:
        """(height_px, width_px) of a tile sampled at ``pixel_pitch``."""
        pitch_mm = self.pixel_pitch / 1000.0
        return round(self.tile_height / pitch_mm), round(self.tile_width / pitch_mm)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "media"}
        out["media"] = self.media.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScannerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scanner config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "media" in kwargs:
            media = kwargs["media"]
            extra = set(media) - {"n1", "n2"}
            if extra:
                raise ConfigError(f"unknown media keys: {sorted(extra)}")
            kwargs["media"] = OpticalMedium(**media)
        return cls(**kwargs)


@dataclass(frozen=True)
class GeometryMaps:
    theta_j: np.ndarray  # radians, (h, w)
    path_length: np.ndarray  # mm, k_j + m_j, (h, w)

    @property
    def shape(self):
        return self.theta_j.shape

    @property
    def center(self) -> tuple[int, int]:
        h, w = self.theta_j.shape
        return h // 2, w // 2


def _pixel_coords(config: ScannerConfig, width_px: int, height_px: int, pixel_pitch_um: float | None):
    if width_px < 1 or height_px < 1:
        raise GeometryError("raster dimensions must be >= 1")
    if pixel_pitch_um is None:
        dx = config.tile_width / width_px
        dy = config.tile_height / height_px
    else:
        dx = dy = pixel_pitch_um / 1000.0
    # pixel (h//2, w//2) sits exactly on B
    x = (np.arange(width_px) - width_px // 2) * dx
    y = (np.arange(height_px) - height_px // 2) * dy
    return np.meshgrid(x, y)


def _frame(config: ScannerConfig):
    th = config.theta_mount
    m, k = config.camera_distance_m, config.lamp_distance_k
    cam = np.array([-m * math.sin(th), 0.0, m * math.cos(th)])
    virt_center = np.array([k * math.sin(th), 0.0, -k * math.cos(th)])
    virt_normal = np.array([math.sin(th), 0.0, -math.cos(th)])
    virt_axis = np.array([math.cos(th), 0.0, math.sin(th)])
    return cam, virt_center, virt_normal, virt_axis


def _trace(config, width_px, height_px, pixel_pitch_um):
    X, Y = _pixel_coords(config, width_px, height_px, pixel_pitch_um)
    cam, vc, vn, va = _frame(config)
    d = np.stack([X - cam[0], Y - cam[1], -cam[2] * np.ones_like(X)], axis=-1)
    denom = d @ vn
    if np.any(denom <= 0):
        raise GeometryError("camera ray runs parallel to or away from the virtual lamp plane")
    t = ((vc - cam) @ vn) / denom
    if np.any(t <= 1.0):
        raise GeometryError("virtual lamp plane lies in front of the painting surface")
    hits = cam + t[..., None] * d
    rel = hits - vc
    half = config.lamp_size / 2.0
    u = rel @ va
    v = rel[..., 1]
    if np.any(np.abs(u) > half) or np.any(np.abs(v) > half):
        raise GeometryError(
            "lamp too small: mirror direction of some pixel misses the emitting area "
            f"(needs |u|<={np.abs(u).max():.1f} mm, |v|<={np.abs(v).max():.1f} mm, lamp half-size {half:.1f} mm)"
        )
    return X, Y, d, t, hits


def geometry_maps(config: ScannerConfig, width_px: int, height_px: int, pixel_pitch_um: float | None = None) -> GeometryMaps:
    """Mirror incidence angle and lamp->surface->camera path for every pixel.

    By default the raster samples the configured tile extent, so the pixel
    size is ``tile_width / width_px``. Pass ``pixel_pitch_um`` to sample a
    raster with an explicit physical pitch instead (tiles cut at arbitrary
    sizes).
    """
    X, Y, d, t, _ = _trace(config, width_px, height_px, pixel_pitch_um)
    norm = np.linalg.norm(d, axis=-1)
    cos_j = config.camera_distance_m * math.cos(config.theta_mount) / norm
    theta = np.arccos(np.clip(cos_j, -1.0, 1.0))
    return GeometryMaps(theta_j=theta, path_length=t * norm)


def lamp_points(config: ScannerConfig, width_px: int, height_px: int, pixel_pitch_um: float | None = None):
    """Surface points J and the real lamp point that mirrors into O through J.

    Returns ``(surface, lamp)`` arrays of shape (h, w, 3), in mm.
    """
    X, Y, _, _, hits = _trace(config, width_px, height_px, pixel_pitch_um)
    surface = np.stack([X, Y, np.zeros_like(X)], axis=-1)
    lamp = hits * np.array([1.0, 1.0, -1.0])
    return surface, lamp


def camera_center(config: ScannerConfig) -> np.ndarray:
    return _frame(config)[0]


def angular_span(config: ScannerConfig, width_px: int, height_px: int, pixel_pitch_um: float | None = None):
    maps = geometry_maps(config, width_px, height_px, pixel_pitch_um)
    return float(maps.theta_j.min()), float(maps.theta_j.max())
