"""Acceptance criteria, one test (or parametrized family) per criterion.

Each test records its outcome; the terminal summary prints one PASS/FAIL
line per criterion.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from glossforge import evaluation as ev
from glossforge import fabrication as fab
from glossforge import kernels
from glossforge import simulator as sim
from glossforge import stitching as st
from glossforge.config import PipelineConfig, SimulationParams, StitchSection
from glossforge.extraction import GlossMap, correct_gloss, correction_maps, joint_range, normalize_gloss, raw_gloss
from glossforge.geometry import ScannerConfig, geometry_maps
from glossforge.masking import HeightMap, build_masks, infill, normal_mask, shadow_mask
from glossforge.optics import OpticalMedium, brewster_angle, fresnel, unpolarized_residual
from glossforge.pipeline import run_pipeline

pytestmark = pytest.mark.acceptance

# reference reflectances at the centre point B
TABLE_B = {
    1.47: {"rs": 0.138, "rp": 2.08e-5, "residual_pct": 0.015},
    1.495: {"rs": 0.1456, "rp": 0.0, "residual_pct": 0.0},
    1.52: {"rs": 0.153, "rp": 2.18e-5, "residual_pct": 0.014},
}
TOL = {"rs": 5e-4, "rp": 5e-5, "residual_pct": 0.01}
# the centre column is the average Brewster angle, arctan(1.495) = 56.22 deg (quoted as 56.3)
THETA_B = brewster_angle(OpticalMedium(1.495))


@pytest.mark.parametrize("quantity", ["rs", "rp", "residual_pct"])
@pytest.mark.parametrize("n2", [1.47, 1.495, 1.52])
def test_c01_fresnel_center_column(n2, quantity, criterion):
    t0 = time.perf_counter()
    c = fresnel(THETA_B, OpticalMedium(n2))
    got = {"rs": float(c.rs), "rp": float(c.rp), "residual_pct": 100.0 * float(unpolarized_residual(c))}[quantity]
    elapsed = time.perf_counter() - t0
    want = TABLE_B[n2][quantity]
    ok = abs(got - want) <= TOL[quantity] and elapsed < 0.05
    criterion(1, ok, f"n2={n2} {quantity}={got:.6g} (ref {want}, tol {TOL[quantity]})")
    assert abs(got - want) <= TOL[quantity]
    assert elapsed < 0.05


def test_c02_brewster_range(criterion):
    lo = math.degrees(brewster_angle(OpticalMedium(1.47)))
    hi = math.degrees(brewster_angle(OpticalMedium(1.52)))
    ok = abs(lo - 55.8) <= 0.05 and abs(hi - 56.7) <= 0.05
    criterion(2, ok, f"brewster 1.47 -> {lo:.3f} deg, 1.52 -> {hi:.3f} deg")
    assert ok


def test_c03_max_residual_bound(criterion):
    cfg = ScannerConfig()
    # full default tile extent; angular span does not depend on sampling density
    geom = geometry_maps(cfg, 720, 360)
    worst = 0.0
    for n2 in np.linspace(1.47, 1.52, 11):
        res = unpolarized_residual(fresnel(geom.theta_j, OpticalMedium(float(n2))))
        worst = max(worst, 100.0 * float(np.max(res)))
    ok = worst <= 5.0
    criterion(3, ok, f"max residual {worst:.3f}% (bound 4.5% + 0.5 pp)")
    assert ok


def test_c04_off_center_correction(criterion):
    t0 = time.perf_counter()
    w, h = 1024, 512
    # the raster spans the whole 180 x 90 mm tile, edge A to edge C
    scene = sim.make_scene({"width": w, "height": h,
                            "rho_d": [{"type": "constant", "value": [0.5, 0.4, 0.3]}],
                            "rho_s": [{"type": "constant", "value": 0.5}]})
    pair, _ = sim.render_pair(scene)
    raw = raw_gloss(pair)
    geom = geometry_maps(scene.config, w, h, scene.height.pixel_pitch)
    corrected = correct_gloss(raw, correction_maps(geom, scene.config))
    elapsed = time.perf_counter() - t0
    cv_raw = raw.values.std() / raw.values.mean()
    cv_cor = corrected.values.std() / corrected.values.mean()
    ok = cv_raw > 0.10 and cv_cor < 0.005 and elapsed < 10
    criterion(4, ok, f"raw CV {100 * cv_raw:.2f}%, corrected CV {100 * cv_cor:.2e}%, {elapsed:.2f}s")
    assert ok


def _round_trip(seed):
    spec = sim.default_scene_spec(1024, 512, seed)
    spec["pixel_pitch_um"] = 25.0
    scene = sim.make_scene(spec)
    pair, _ = sim.render_pair(scene)
    masks = build_masks(scene.height)
    geom = geometry_maps(scene.config, 1024, 512, 25.0)
    corrected = correct_gloss(raw_gloss(pair), correction_maps(geom, scene.config))
    filled = infill(corrected, masks)
    rec = normalize_gloss(filled, *joint_range([filled])).values
    rho = scene.rho_s
    truth = (rho - rho.min()) / (rho.max() - rho.min())
    m = masks.combined
    err = rec - truth
    return float(np.sqrt(np.mean(err[~m] ** 2))), float(np.sqrt(np.mean(err[m] ** 2))), float(m.mean())


def test_c05_round_trip(criterion):
    un, masked, frac = _round_trip(0)
    ok = un < 0.02 and masked < 0.10
    criterion(5, ok, f"unmasked RMS {100 * un:.3f}%, masked+infilled RMS {100 * masked:.2f}% ({100 * frac:.2f}% masked)")
    assert ok


def test_c06_mask_exactness(criterion):
    pitch = 25.0
    shape = (64, 96)
    details, ok = [], True
    for slope, expect in ((5.0, False), (15.0, True)):
        scene = sim.make_scene({"width": shape[1], "height": shape[0], "pixel_pitch_um": pitch,
                                "height_map": [{"type": "ramp", "axis": "x", "slope_deg": slope}]})
        masks = build_masks(scene.height)
        wrong = int(np.count_nonzero(masks.combined[1:-1, 1:-1] != expect))
        ok &= wrong == 0
        details.append(f"{slope:g} deg plane: {wrong} interior misclassified")
    dh = 0.5
    scene = sim.make_scene({"width": 200, "height": 16, "pixel_pitch_um": pitch,
                            "height_map": [{"type": "step", "axis": "x", "position": 0.5, "delta": dh}]})
    sh = shadow_mask(scene.height, math.radians(56.3), "right")
    runs = sh.sum(axis=1)
    expected = dh * math.tan(math.radians(56.3)) / (pitch / 1000.0)
    dev = float(np.max(np.abs(runs - expected)))
    ok &= dev <= 1.0
    details.append(f"shadow run {runs.min()}..{runs.max()} px vs {expected:.2f}")
    criterion(6, ok, ", ".join(details))
    assert ok


def _infill_oracle(values, mask, radius):
    h, w = values.shape
    out = values.copy()
    ys, xs = np.nonzero(mask)
    for y, x in zip(ys, xs):
        r = radius
        while True:
            y0, y1 = max(0, y - r), min(h, y + r + 1)
            x0, x1 = max(0, x - r), min(w, x + r + 1)
            yy, xx = np.mgrid[y0:y1, x0:x1]
            disk = ((yy - y) ** 2 + (xx - x) ** 2 <= r * r) & ~mask[y0:y1, x0:x1]
            if disk.any():
                out[y, x] = values[y0:y1, x0:x1][disk].max()
                break
            r *= 2
    return out


def test_c07_infill_contract(criterion):
    bad = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        h, w = rng.integers(8, 40, size=2)
        values = rng.random((h, w))
        density = rng.uniform(0.05, 0.95)
        mask = rng.random((h, w)) < density
        if seed % 10 == 0:
            mask[:] = False
            mask[rng.integers(0, h), rng.integers(0, w)] = True
        if mask.all():
            mask[0, 0] = False
        radius = int(rng.integers(1, 6))
        got = infill(GlossMap(values), mask, radius).values
        if not np.array_equal(got, _infill_oracle(values, mask, radius)):
            bad += 1
    ok = bad == 0
    criterion(7, ok, f"{100 - bad}/100 random scenes match the brute-force disk oracle ({kernels.BACKEND} backend)")
    assert ok


def _stitch_master():
    spec = sim.default_scene_spec(600, 420, seed=5)
    scene = sim.make_scene(spec)
    color, _ = sim.render_color(scene, vignette=0.0)
    return np.concatenate([color, scene.height.values[..., None], scene.rho_s[..., None]], axis=-1), scene


def test_c08_stitching(criterion):
    master, scene = _stitch_master()
    pitch = scene.height.pixel_pitch
    cuts = sim.cut_tiles(master, (3, 3), overlap=0.3, jitter=5, seed=11)
    rng = np.random.default_rng(2)
    grid = [[None] * 3 for _ in range(3)]
    planes = {}
    for ct in cuts:
        r, c = ct.grid_pos
        d = ct.data
        th, tw = d.shape[:2]
        a, b, k = rng.normal(0, 2e-4), rng.normal(0, 2e-4), rng.uniform(-0.3, 0.3)
        planes[(r, c)] = (a, b, k)
        hgt = d[..., 3] + st.plane_values((a, b, k), (th, tw))
        grid[r][c] = st.Tile(d[..., :3].copy(), HeightMap(hgt, pitch), GlossMap(d[..., 4].copy(), normalized=True),
                             (r, c), ct.nominal_offset)
    true = {ct.grid_pos: ct.true_offset for ct in cuts}
    t0 = time.perf_counter()
    mosaic = st.stitch(grid)
    elapsed = time.perf_counter() - t0

    wrong_pairs = [(p, q) for (p, q), off in mosaic.pair_offsets.items()
                   if off != (true[q][0] - true[p][0], true[q][1] - true[p][1])]
    x0 = min(v[0] for v in true.values())
    y0 = min(v[1] for v in true.values())
    H, W = mosaic.height.shape
    ref = master[y0:y0 + H, x0:x0 + W]
    cov = mosaic.coverage
    rms = {}
    for name, got, want in (("color", mosaic.color, ref[..., :3]), ("gloss", mosaic.gloss, ref[..., 4])):
        m = cov if got.ndim == 2 else np.broadcast_to(cov[..., None], got.shape)
        rms[name] = float(np.sqrt(np.mean((got - want)[m] ** 2)) / np.ptp(want))
    # heights live in the centre tile's frame: master plus that tile's plane
    cpos = true[(1, 1)]
    anchor = st.plane_values(planes[(1, 1)], (H, W), (x0 - cpos[0], y0 - cpos[1]))
    dh = (mosaic.height - anchor - ref[..., 3])[cov]
    rms["height"] = float(np.sqrt(np.mean(dh ** 2)) / np.ptp(ref[..., 3]))

    tile_grad = 0.0
    for row in grid:
        for t in row:
            gy, gx = np.gradient(t.height.values)
            tile_grad = max(tile_grad, float(np.hypot(gx, gy).max()))
    seam_grad = max(s["max_gradient"] for s in mosaic.seams)
    grad_ok = seam_grad <= tile_grad + 1e-3  # 1 um in mm

    ok = (len(mosaic.pair_offsets) == 12 and not wrong_pairs and max(rms.values()) < 0.005
          and grad_ok and elapsed < 60)
    criterion(8, ok, f"{12 - len(wrong_pairs)}/12 offsets exact, RMS % of range "
                     + ", ".join(f"{k} {100 * v:.2e}" for k, v in rms.items())
                     + f", seam grad {seam_grad:.4f} <= tile {tile_grad:.4f}+0.001 mm/px, {elapsed:.1f}s")
    assert ok


def _rotation_scans(noise, seed=0, n=384):
    spec = sim.default_scene_spec(n, n, seed)
    spec["pixel_pitch_um"] = 200.0
    scene = sim.make_scene(spec)
    corrected, masks, factors = [], [], []
    for k in range(4):
        s = sim.rotate_scene(scene, k)
        pair, _ = sim.render_pair(s, noise_sigma=noise, seed=1000 * seed + k)
        geom = geometry_maps(s.config, n, n, s.height.pixel_pitch)
        corr = correction_maps(geom, s.config)
        corrected.append(correct_gloss(raw_gloss(pair), corr))
        masks.append(build_masks(s.height))
        factors.append(corr.f_map / corr.e_map)
    lo, hi = joint_range(corrected)
    maps = [infill(normalize_gloss(c, lo, hi), m) for c, m in zip(corrected, masks)]
    return maps, masks, factors, (lo, hi)


def test_c09_rotation_consistency(criterion):
    sigma = 0.005
    maps, masks, factors, (lo, hi) = _rotation_scans(sigma)
    report = ev.consistency_report(maps, [m.combined for m in masks])
    back = lambda arrs: [np.rot90(a, -k) for k, a in enumerate(arrs)]
    f_back = back(factors)
    m_back = back([m.combined for m in masks])
    ok = True
    parts = []
    for i, p in enumerate(report.pairs, start=1):
        unmasked = ~(m_back[i] | m_back[0])
        # noise oracle: difference of two corrected captures, each carrying 2 sigma^2 (f/e)^2
        var = 2 * sigma ** 2 * (f_back[i] ** 2 + f_back[0] ** 2)
        pred = 100.0 * math.sqrt(float(np.mean(var[unmasked]))) / (hi - lo)
        ratio = p.unmasked_signed_std / pred
        good = abs(p.mean) <= 0.5 and abs(p.laplace_mu) <= 0.3 and abs(ratio - 1) <= 0.10
        ok &= good
        parts.append(f"{p.label} mean {p.mean:+.3f}% muL {p.laplace_mu:+.3f}% std/oracle {ratio:.3f}")
    a = np.rot90(maps[1].values, -1)
    b = maps[0].values
    s_ab = ev.difference_stats(a, b, scale=(0, 1))
    s_ba = ev.difference_stats(b, a, scale=(0, 1))
    anti = s_ab.mean == -s_ba.mean and s_ab.std == s_ba.std
    ok &= anti
    parts.append(f"antisymmetry {'exact' if anti else 'broken'}")
    criterion(9, ok, "; ".join(parts))
    assert ok


def test_c10_gloss_curve_inversion(criterion):
    curve = fab.default_curve()
    assert len(curve.samples) == 8
    probes = np.linspace(curve.g60_min, curve.g60_max, 100)
    err = float(np.max(np.abs(curve(curve.inverse(probes)) - probes)))
    ends = fab.gloss_to_print(np.array([0.0, 1.0]), curve)
    g_ends = curve(ends)
    end_err = max(abs(g_ends[0] - curve.g60_min), abs(g_ends[1] - curve.g60_max))
    ok = err <= 0.5 and end_err <= 0.5
    criterion(10, ok, f"max |f(f^-1(g)) - g| = {err:.2e} GU over 100 probes; endpoints -> "
                      f"{g_ends[0]:.2f}/{g_ends[1]:.2f} GU (range {curve.g60_min:.2f}..{curve.g60_max:.2f})")
    assert ok


def test_c11_fabrication_invariants(criterion):
    rng = np.random.default_rng(7)
    n = 256
    yy, xx = np.mgrid[0:n, 0:n]
    height = 0.2 * (1 + np.sin(xx / 17.0) * np.cos(yy / 23.0)) + 0.05 * rng.random((n, n))
    color = rng.random((n, n, 3))
    gloss = np.clip(0.5 + 0.4 * np.sin(xx / 40.0 + yy / 60.0), 0, 1)
    job = fab.build_print_job(color, height, gloss, layer_thickness_um=10.0)
    L = job.n_color_layers
    stack = np.stack([job.color_layer(l) for l in range(1, L + 1)])
    levels = np.arange(1, L + 1)[:, None, None]
    idx = job.layer_index[None]
    below_white = np.all(np.where(levels < idx, stack == fab.WHITE, True), axis=0)
    at_color = np.all(np.where(levels == idx, stack > 0, True), axis=0)
    above_empty = np.all(np.where(levels > idx, stack == 0, True), axis=0)
    whites = np.sum((stack == fab.WHITE) & (levels < idx), axis=0)
    conserve = bool(np.all(whites == job.layer_index - 1) and below_white.all() and at_color.all() and above_empty.all())
    total_ok = int(np.count_nonzero(stack)) == int(job.layer_index.sum())
    flow = bool(np.all(job.gloss_layers[0] == 1))
    pv = fab.gloss_to_print(gloss, fab.default_curve())
    target = float(np.mean(1 - pv / 100))
    cov = [float(job.gloss_layers[i].mean()) for i in range(1, 6)]
    cov_ok = all(abs(c - target) <= 0.01 for c in cov)

    # anti-monotone: more gloss never means more matte ink
    mono = True
    levels_g = np.linspace(0, 1, 11)
    realized = []
    for g in levels_g:
        p = fab.gloss_to_print(np.full((64, 64), g), fab.default_curve())
        realized.append(fab.dither_gloss(p)[1:].mean())
    mono &= bool(np.all(np.diff(realized) <= 1e-12))
    for seed in range(20):
        r = np.random.default_rng(seed)
        g1 = r.random((32, 32))
        g2 = np.clip(g1 + r.random((32, 32)) * (r.random((32, 32)) < 0.5), 0, 1)
        c1 = 1 - fab.gloss_to_print(g1, fab.default_curve()) / 100
        c2 = 1 - fab.gloss_to_print(g2, fab.default_curve()) / 100
        mono &= bool(np.all(c2 <= c1 + 1e-12))
    ok = conserve and total_ok and flow and cov_ok and mono
    criterion(11, ok, f"conservation {'exact' if conserve and total_ok else 'broken'} over {n}x{n}x{L}; "
                      f"flow layer full={flow}; coverage {min(cov):.4f}..{max(cov):.4f} vs {target:.4f}; "
                      f"anti-monotone={mono}")
    assert ok


def _tree(root: Path):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c12_determinism(tmp_path, criterion):
    cfg = PipelineConfig(simulation=SimulationParams(width=256, height=160, noise_sigma=0.003, rotation_size=96),
                         stitch=StitchSection(jitter=2), seed=42)
    run_pipeline(cfg, tmp_path / "a", jobs=3)
    run_pipeline(cfg, tmp_path / "b", jobs=1)
    ta, tb = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    differing = sorted(k for k in set(ta) | set(tb) if ta.get(k) != tb.get(k))
    ok = not differing and len(ta) > 20
    criterion(12, ok, f"{len(ta)} files, {len(differing)} differ" + (f": {differing[:3]}" if differing else ""))
    assert ok
