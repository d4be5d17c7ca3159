"""Reflection at a smooth dielectric interface.

All functions accept scalars or numpy arrays for the incidence angle and
broadcast. Angles are in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, OpticsDomainError

#: Refractive index range of oil paints and varnishes.
PAINT_N2_MIN = 1.47
PAINT_N2_MAX = 1.52
PAINT_N2_MEAN = 1.495

_ANGLE_SLACK = 1e-12


@dataclass(frozen=True)
class OpticalMedium:
    """Pair of refractive indices: ambient ``n1`` and scanned material ``n2``."""

    n2: float = PAINT_N2_MEAN
    n1: float = 1.0

    def __post_init__(self):
        if not (self.n1 >= 1.0 and self.n2 >= 1.0):
            raise OpticsDomainError(f"refractive indices must be >= 1, got n1={self.n1}, n2={self.n2}")

    @property
    def is_paint(self) -> bool:
        return self.n1 == 1.0 and PAINT_N2_MIN <= self.n2 <= PAINT_N2_MAX

    def to_dict(self) -> dict:
        return {"n1": self.n1, "n2": self.n2}


@dataclass(frozen=True)
class ReflectionCoefficients:
    """Power reflectances for s- and p-polarized light."""

    rs: float | np.ndarray
    rp: float | np.ndarray

    @property
    def difference(self):
        return self.rs - self.rp


def _check_angle(theta_i):
    t = np.asarray(theta_i, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < -_ANGLE_SLACK) or np.any(t > math.pi / 2 + _ANGLE_SLACK):
        raise OpticsDomainError("incidence angle must lie in [0, pi/2]")
    return np.clip(t, 0.0, math.pi / 2)


def cos_theta_t(theta_i, media: OpticalMedium):
    """Cosine of the transmission angle via Snell's law.

    Raises:
        OpticsDomainError: if the ray would be totally internally reflected,
            which only happens when ``n1 > n2``.
    """
    t = _check_angle(theta_i)
    s = (media.n1 / media.n2) * np.sin(t)
    if np.any(s > 1.0):
        raise OpticsDomainError(
            f"total internal reflection for n1={media.n1} > n2={media.n2}; medium ordering unsupported"
        )
    out = np.sqrt(1.0 - s * s)
    return float(out) if out.ndim == 0 else out


def fresnel(theta_i, media: OpticalMedium) -> ReflectionCoefficients:
    t = _check_angle(theta_i)
    ci = np.cos(t)
    ct = np.asarray(cos_theta_t(t, media))
    n1, n2 = media.n1, media.n2
    rs = ((n1 * ci - n2 * ct) / (n1 * ci + n2 * ct)) ** 2
    rp = ((n1 * ct - n2 * ci) / (n1 * ct + n2 * ci)) ** 2
    if rs.ndim == 0:
        return ReflectionCoefficients(float(rs), float(rp))
    return ReflectionCoefficients(rs, rp)


def brewster_angle(media: OpticalMedium) -> float:
    """Incidence angle (radians) at which p-polarized reflection vanishes."""
    return math.atan2(media.n2, media.n1)


def unpolarized_residual(coeffs: ReflectionCoefficients):
    """Fraction of specular reflection that the crossed polarizer cannot remove.

    This is ``rp / (rp + rs)``; multiply by 100 for the percentage form.
    """
    rs = np.asarray(coeffs.rs, dtype=float)
    rp = np.asarray(coeffs.rp, dtype=float)
    total = rs + rp
    if np.any(total <= 0.0):
        raise DegenerateError("rs + rp == 0: residual undefined (index-matched interface at normal incidence?)")
    out = rp / total
    return float(out) if out.ndim == 0 else out
