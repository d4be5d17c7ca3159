import math

import numpy as np
import pytest

from glossforge.errors import ConfigError, GeometryError
from glossforge.geometry import ScannerConfig, angular_span, camera_center, geometry_maps, lamp_points
from glossforge.optics import OpticalMedium, fresnel, unpolarized_residual


def test_center_pixel_sees_mount_angle():
    cfg = ScannerConfig()
    g = geometry_maps(cfg, 200, 100)
    cy, cx = g.center
    assert g.theta_j[cy, cx] == pytest.approx(cfg.theta_mount, abs=1e-12)
    assert g.path_length[cy, cx] == pytest.approx(cfg.lamp_distance_k + cfg.camera_distance_m, rel=1e-12)


def test_angle_increases_towards_c_edge():
    g = geometry_maps(ScannerConfig(), 300, 3)
    row = g.theta_j[1]
    assert np.all(np.diff(row) > 0)


def test_span_matches_edge_reflectances():
    # edges A and C of the default tile land near 48.7 and 61.8 degrees
    lo, hi = angular_span(ScannerConfig(), 720, 360)
    assert math.degrees(lo) == pytest.approx(48.7, abs=0.1)
    assert math.degrees(hi) == pytest.approx(61.8, abs=0.1)
    m = OpticalMedium(1.495)
    assert float(fresnel(lo, m).rs) == pytest.approx(0.1045, abs=2e-3)
    assert float(fresnel(hi, m).rs) == pytest.approx(0.1899, abs=3e-3)


def test_mirror_law_holds_per_pixel():
    cfg = ScannerConfig()
    surface, lamp = lamp_points(cfg, 40, 20)
    cam = camera_center(cfg)
    to_cam = cam - surface
    to_lamp = lamp - surface
    to_cam /= np.linalg.norm(to_cam, axis=-1, keepdims=True)
    to_lamp /= np.linalg.norm(to_lamp, axis=-1, keepdims=True)
    # mirrored about the surface normal z: x,y flip sign, z equal
    assert np.allclose(to_cam[..., :2], -to_lamp[..., :2], atol=1e-12)
    assert np.allclose(to_cam[..., 2], to_lamp[..., 2], atol=1e-12)
    g = geometry_maps(cfg, 40, 20)
    assert np.allclose(np.cos(g.theta_j), to_cam[..., 2], atol=1e-12)
    path = np.linalg.norm(cam - surface, axis=-1) + np.linalg.norm(lamp - surface, axis=-1)
    assert np.allclose(path, g.path_length, rtol=1e-12)


def test_explicit_pitch():
    g = geometry_maps(ScannerConfig(), 64, 32, pixel_pitch_um=25.0)
    lo, hi = float(g.theta_j.min()), float(g.theta_j.max())
    assert hi - lo < math.radians(0.2)


def test_small_lamp_rejected():
    with pytest.raises(GeometryError, match="lamp too small"):
        geometry_maps(ScannerConfig(lamp_size=20.0), 100, 50)


def test_config_validation_and_roundtrip():
    with pytest.raises(ConfigError):
        ScannerConfig(theta_mount=0.0)
    with pytest.raises(ConfigError):
        ScannerConfig(lamp_distance_k=-1)
    cfg = ScannerConfig(media=OpticalMedium(1.52))
    assert ScannerConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ScannerConfig.from_dict({"bogus": 1})


def test_native_shape():
    assert ScannerConfig().native_shape == (3600, 7200)


def test_residual_over_span_under_bound():
    g = geometry_maps(ScannerConfig(), 360, 180)
    res = unpolarized_residual(fresnel(g.theta_j, OpticalMedium(1.495)))
    assert 100 * float(np.max(res)) == pytest.approx(4.06, abs=0.1)
