import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from glossforge import fabrication as fab
from glossforge.errors import CalibrationError, FabricationError
from glossforge.extraction import GlossMap


def test_linear_curve_inverts_exactly():
    curve = fab.fit_gloss_curve([(p, 10 + 0.8 * p) for p in range(0, 101, 10)])
    assert curve.increasing
    assert float(curve(50)) == pytest.approx(50.0)
    assert float(curve.inverse(50.0)) == pytest.approx(50.0, abs=1e-9)
    assert float(curve.inverse(500.0)) == pytest.approx(100.0)


def test_shuffled_duplicates_give_same_curve(rng):
    pts = [(p, 5 + 0.7 * p) for p in range(0, 101, 20)]
    dup = pts + [(40, 5 + 0.7 * 40 + 1), (40, 5 + 0.7 * 40 - 1)]
    shuffled = [dup[i] for i in rng.permutation(len(dup))]
    a = fab.fit_gloss_curve(pts)
    b = fab.fit_gloss_curve(shuffled)
    grid = np.linspace(0, 100, 41)
    assert np.allclose(a(grid), b(grid), atol=1e-12)


def test_decreasing_curve():
    curve = fab.fit_gloss_curve([(0, 90), (50, 40), (100, 5)])
    assert not curve.increasing
    assert float(curve(curve.inverse(40.0))) == pytest.approx(40.0, abs=1e-9)


def test_non_monotone_samples_rejected():
    with pytest.raises(CalibrationError):
        fab.fit_gloss_curve([(0, 10), (25, 90), (50, 10), (75, 90), (100, 10)])


def test_csv_header_and_round_trip(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("p,gloss\n0,1\n")
    with pytest.raises(CalibrationError, match="header"):
        fab.load_curve_csv(bad)
    good = tmp_path / "good.csv"
    fab.write_curve_csv(good, fab.default_curve_samples())
    curve = fab.load_curve_csv(good)
    assert curve.g60_min == pytest.approx(8.0) and curve.g60_max == pytest.approx(88.0)


def test_gloss_to_print_requires_normalized():
    with pytest.raises(FabricationError):
        fab.gloss_to_print(GlossMap(np.zeros((2, 2))), fab.default_curve())
    with pytest.raises(FabricationError):
        fab.gloss_to_print(np.zeros((2, 2)), None)


def test_uniform_height_layers():
    t = 10.0
    h = np.full((4, 4), 10 * t / 1000.0)
    assert np.all(fab.layer_indices(h, t) == 10)
    assert np.all(fab.layer_indices(np.zeros((3, 3)), t) == 1)


def test_ramp_layer_count():
    h = np.linspace(0, 1.1, 50)[None, :].repeat(3, 0)
    idx = fab.layer_indices(h, 2.0)
    assert idx.max() == 550


def test_height_errors():
    with pytest.raises(FabricationError, match="scale heights"):
        fab.layer_indices(np.full((2, 2), 6.0), 10.0)
    with pytest.raises(FabricationError):
        fab.layer_indices(np.full((2, 2), -0.1), 10.0)
    with pytest.raises(FabricationError):
        fab.layer_indices(np.zeros((2, 2)), 0.0)


def test_gloss_extremes():
    full = fab.dither_gloss(np.full((16, 16), 100.0))
    assert np.all(full[0] == 1) and not full[1:].any()
    matte = fab.dither_gloss(np.full((16, 16), 0.0))
    assert np.all(matte == 1)
    with pytest.raises(FabricationError):
        fab.dither_gloss(np.full((2, 2), 101.0))


def test_dither_parallel_matches_serial(rng):
    p = rng.random((32, 40)) * 100
    assert np.array_equal(fab.dither_gloss(p, seed=3), fab.dither_gloss(p, seed=3, jobs=4))


def test_cmyk_shares():
    shares = fab.separate_cmyk(np.array([[[1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]]))
    assert np.allclose(shares[0, 0], [0, 0, 0, 0, 1])
    assert np.allclose(shares[0, 1], [0, 0, 0, 1, 0])
    # red needs two full inks; one voxel holds them half and half
    assert np.allclose(shares[0, 2], [0, 0.5, 0.5, 0, 0])


@settings(max_examples=50, deadline=None)
@given(hst.lists(hst.floats(0, 1), min_size=3, max_size=3))
def test_cmyk_shares_sum_to_one(rgb):
    s = fab.separate_cmyk(np.array(rgb))
    assert s.sum() == pytest.approx(1.0)
    assert np.all(s >= 0)


def test_print_job_round_trip(tmp_path, rng):
    color = rng.random((12, 10, 3))
    height = rng.random((12, 10)) * 0.2
    gloss = GlossMap(rng.random((12, 10)), normalized=True)
    job = fab.build_print_job(color, height, gloss, seed=1)
    assert job.n_color_layers == int(np.max(np.maximum(1, np.ceil(height / 0.01 - 1e-9))))
    fab.write_print_job(job, tmp_path / "job")
    assert fab.verify_print_job(tmp_path / "job") == []
    back = fab.read_print_job(tmp_path / "job")
    assert np.array_equal(back.layer_index, job.layer_index)
    assert np.array_equal(back.ink_class, job.ink_class)
    assert np.array_equal(back.gloss_layers, job.gloss_layers)
    counts = job.voxel_counts()
    assert counts["total"] == int(job.layer_index.sum())
    assert sum(counts[k] for k in fab.INKS) == counts["total"]
