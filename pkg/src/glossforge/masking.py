"""Normal and shadow masks from the height map, and local-maximum infill."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ShapeMismatchError
from .extraction import GlossMap
from .geometry import DEFAULT_MOUNT_DEG

log = logging.getLogger(__name__)

MAX_RELIEF_MM = 10.0


@dataclass(frozen=True)
class HeightMap:
    values: np.ndarray  # mm
    pixel_pitch: float  # um

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("height map contains non-finite values")
        if self.values.size and np.ptp(self.values) > MAX_RELIEF_MM:
            raise ValueError(f"relief {np.ptp(self.values):.2f} mm exceeds plausibility bound of {MAX_RELIEF_MM} mm")
        if not self.pixel_pitch > 0:
            raise ValueError("pixel_pitch must be positive")

    @property
    def pitch_mm(self) -> float:
        return self.pixel_pitch / 1000.0


@dataclass(frozen=True)
class MaskSet:
    normal_mask: np.ndarray
    shadow_mask: np.ndarray

    @property
    def combined(self) -> np.ndarray:
        return self.normal_mask | self.shadow_mask

    def stats(self) -> dict:
        n = self.normal_mask.size
        return {
            "normal_pct": 100.0 * np.count_nonzero(self.normal_mask) / n,
            "shadow_pct": 100.0 * np.count_nonzero(self.shadow_mask) / n,
            "both_pct": 100.0 * np.count_nonzero(self.normal_mask & self.shadow_mask) / n,
        }


def surface_tilt(h: HeightMap) -> np.ndarray:
    """Angle (radians) between local and global normal, per pixel.

    Central differences inside, one-sided differences on the border.
    """
    gy, gx = np.gradient(h.values, h.pitch_mm, edge_order=1)
    return np.arctan(np.hypot(gx, gy))


def normal_mask(h: HeightMap, threshold: float = math.radians(10.0)) -> np.ndarray:
    if h.values.shape[0] < 3 or h.values.shape[1] < 3:
        raise ValueError("normal mask needs at least a 3x3 raster")
    return surface_tilt(h) > threshold


def shadow_mask(h: HeightMap, incidence: float = math.radians(DEFAULT_MOUNT_DEG), light_from: str = "right") -> np.ndarray:
    """Cast shadows of light arriving along the rows at ``incidence`` from the normal.

    ``light_from="right"`` means the lamp sits beyond the last column (the
    scanner's C edge), so occluders lie at larger column indices.

    A pixel J is shadowed when some pixel K between it and the lamp satisfies
    h(K) > h(J) + dist(K, J) / tan(incidence). Written as a running maximum of
    h + u / tan(incidence), with u the distance from the lit edge, this is a
    single cumulative scan per row.
    """
    if light_from not in ("left", "right"):
        raise ValueError("light_from must be 'left' or 'right'")
    vals = h.values
    if vals.ndim != 2 or vals.shape[1] < 2:
        raise ValueError("shadow mask needs at least a 1x2 raster")
    if light_from == "right":
        vals = vals[:, ::-1]
    w = vals.shape[1]
    u = np.arange(w) * h.pitch_mm
    key = vals + u / math.tan(incidence)
    prev_max = np.full_like(key, -np.inf)
    prev_max[:, 1:] = np.maximum.accumulate(key, axis=1)[:, :-1]
    mask = prev_max > key
    if light_from == "right":
        mask = mask[:, ::-1]
    return mask


def build_masks(h: HeightMap, normal_threshold: float = math.radians(10.0),
                incidence: float = math.radians(DEFAULT_MOUNT_DEG), light_from: str = "right") -> MaskSet:
    return MaskSet(normal_mask(h, normal_threshold), shadow_mask(h, incidence, light_from))


def infill(gloss: GlossMap, mask: MaskSet | np.ndarray, radius: int = 40) -> GlossMap:
    """Fill masked pixels with the largest unmasked value inside a disk.

    Pixels without any unmasked neighbour in the disk retry with the radius
    doubled until one is found.
    """
    combined = mask.combined if isinstance(mask, MaskSet) else np.asarray(mask, dtype=bool)
    if combined.shape != gloss.values.shape:
        raise ShapeMismatchError(f"mask {combined.shape} vs gloss {gloss.values.shape}")
    if not combined.any():
        return replace(gloss, values=gloss.values.copy())
    if combined.all():
        log.warning("every pixel is masked; gloss left unfilled")
        return replace(gloss, values=gloss.values.copy())
    filled, found = kernels.disk_max_fill(gloss.values, combined, radius)
    r = radius
    while not found.all():
        r *= 2
        pending = ~found
        retry, found_now = kernels.disk_max_fill(gloss.values, combined, r)
        take = pending & found_now
        filled[take] = retry[take]
        found = found | found_now
        log.debug("infill radius doubled to %d for %d pixels", r, np.count_nonzero(take))
    return replace(gloss, values=filled)
