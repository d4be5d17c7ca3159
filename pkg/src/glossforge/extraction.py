"""From a polarized capture pair to a calibrated, normalized gloss map."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateError, ShapeMismatchError
from .geometry import GeometryMaps, ScannerConfig
from .optics import fresnel

WHITE_REF_EPS = 1e-6


@dataclass(frozen=True)
class PolarizedPair:
    """``i1`` passes the s-polarized specular reflection, ``i2`` blocks it."""

    i1: np.ndarray
    i2: np.ndarray

    def __post_init__(self):
        if self.i1.shape != self.i2.shape:
            raise ShapeMismatchError(f"capture shapes differ: {self.i1.shape} vs {self.i2.shape}")
        for img in (self.i1, self.i2):
            if not np.all(np.isfinite(img)) or np.any(img < 0):
                raise ValueError("captures must be finite and non-negative")


@dataclass(frozen=True)
class GlossMap:
    values: np.ndarray
    scale_min: float | None = None
    scale_max: float | None = None
    normalized: bool = False

    def sidecar(self) -> dict:
        return {"scale_min": self.scale_min, "scale_max": self.scale_max, "normalized": self.normalized}


@dataclass(frozen=True)
class CorrectionMaps:
    e_map: np.ndarray  # ((k+m) / (k_j+m_j))^2
    f_map: np.ndarray  # (Rs-Rp)(mount) / (Rs-Rp)(theta_j)


def hsl_lightness(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=float)
    if img.ndim == 2:
        return img.copy()
    return 0.5 * (img.max(axis=-1) + img.min(axis=-1))


def flat_field(img: np.ndarray, white_ref: np.ndarray) -> np.ndarray:
    """Remove illumination non-uniformity using a white reference capture.

    Each channel is divided by the reference and rescaled by the reference's
    channel mean, so a perfectly uniform reference is the identity.
    """
    img = np.asarray(img, dtype=float)
    white_ref = np.asarray(white_ref, dtype=float)
    if img.shape != white_ref.shape:
        raise ShapeMismatchError(f"image {img.shape} and white reference {white_ref.shape} differ")
    if np.any(white_ref <= WHITE_REF_EPS):
        raise DegenerateError("white reference has pixels <= 1e-6; reference capture is defective")
    axes = (0, 1) if img.ndim == 3 else None
    means = white_ref.mean(axis=axes)
    return np.maximum(img * means / white_ref, 0.0)


def raw_gloss(pair: PolarizedPair) -> GlossMap:
    # sensor noise can push I1 - I2 below zero; physically I1 >= I2
    diff = hsl_lightness(pair.i1) - hsl_lightness(pair.i2)
    return GlossMap(np.maximum(diff, 0.0))


def correction_maps(geom: GeometryMaps, config: ScannerConfig) -> CorrectionMaps:
    total = config.lamp_distance_k + config.camera_distance_m
    e_map = (total / geom.path_length) ** 2
    center = fresnel(config.theta_mount, config.media)
    local = fresnel(geom.theta_j, config.media)
    local_diff = np.asarray(local.difference)
    if np.any(local_diff <= 0):
        raise DegenerateError("Rs - Rp <= 0 for some pixel; geometry reaches normal incidence")
    f_map = center.difference / local_diff
    return CorrectionMaps(e_map=e_map, f_map=f_map)


def correct_gloss(raw: GlossMap, corr: CorrectionMaps) -> GlossMap:
    """Rescale every pixel to the value it would have at the tile centre.

    The Fresnel factor is applied as is; the path-length factor is divided
    out, since a longer mirror path means less irradiance reached the sensor.
    """
    if raw.normalized:
        raise ValueError("correct_gloss expects an un-normalized gloss map")
    if raw.values.shape != corr.e_map.shape:
        raise ShapeMismatchError(f"gloss {raw.values.shape} vs correction {corr.e_map.shape}")
    return GlossMap(raw.values * corr.f_map / corr.e_map)


def joint_range(maps) -> tuple[float, float]:
    """Min and max over several gloss maps (or arrays), ignoring NaN."""
    vals = [np.asarray(getattr(m, "values", m)) for m in maps]
    return float(min(np.nanmin(v) for v in vals)), float(max(np.nanmax(v) for v in vals))


def normalize_gloss(gmap: GlossMap, global_min: float, global_max: float) -> GlossMap:
    if not global_max > global_min:
        raise DegenerateError(f"normalization range is empty: [{global_min}, {global_max}]")
    scaled = np.clip((gmap.values - global_min) / (global_max - global_min), 0.0, 1.0)
    return replace(gmap, values=scaled, scale_min=float(global_min), scale_max=float(global_max), normalized=True)
