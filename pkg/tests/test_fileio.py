import math

import numpy as np
import pytest

from glossforge import fileio
from glossforge.errors import RasterFormatError


def test_gfr_round_trip(tmp_path, rng):
    vals = rng.random((7, 11)).astype(np.float32)
    p = fileio.write_gfr(tmp_path / "a.gfr", vals, 42.5)
    back, pitch = fileio.read_gfr(p)
    assert np.array_equal(back, vals)
    assert pitch == 42.5
    assert p.stat().st_size == 16 + 4 * 77


def test_gfr_rejects_nan_and_bad_files(tmp_path):
    with pytest.raises(RasterFormatError):
        fileio.write_gfr(tmp_path / "n.gfr", np.array([[0.0, math.nan]]))
    with pytest.raises(RasterFormatError):
        fileio.write_gfr(tmp_path / "n.gfr", np.zeros(3))
    p = fileio.write_gfr(tmp_path / "t.gfr", np.zeros((3, 3)))
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(RasterFormatError, match="size"):
        fileio.read_gfr(p)
    (tmp_path / "m.gfr").write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(RasterFormatError, match="magic"):
        fileio.read_gfr(tmp_path / "m.gfr")


@pytest.mark.parametrize("shape", [(5, 6), (5, 6, 3)])
def test_png16_round_trip(tmp_path, rng, shape):
    vals = rng.random(shape)
    fileio.write_png16(tmp_path / "a.png", vals)
    back = fileio.read_png16(tmp_path / "a.png")
    assert back.shape == shape
    assert np.max(np.abs(back - vals)) <= 0.5 / 65535 + 1e-12


def test_png_is_byte_stable(tmp_path, rng):
    vals = rng.random((8, 8))
    fileio.write_png16(tmp_path / "a.png", vals)
    fileio.write_png16(tmp_path / "b.png", vals)
    assert fileio.sha256_file(tmp_path / "a.png") == fileio.sha256_file(tmp_path / "b.png")


def test_mask_and_palette_round_trip(tmp_path, rng):
    m = rng.random((9, 13)) < 0.3
    fileio.write_mask_png(tmp_path / "m.png", m)
    assert np.array_equal(fileio.read_mask_png(tmp_path / "m.png"), m)
    idx = rng.integers(0, 6, (9, 13)).astype(np.uint8)
    fileio.write_palette_png(tmp_path / "p.png", idx)
    assert np.array_equal(fileio.read_palette_png(tmp_path / "p.png"), idx)


def test_json_is_canonical(tmp_path):
    data = {"b": np.float64(1.5), "a": np.arange(3), "c": (1, 2)}
    text = fileio.dumps_json(data)
    assert text.index('"a"') < text.index('"b"')
    fileio.write_json(tmp_path / "x.json", data)
    assert fileio.read_json(tmp_path / "x.json") == {"a": [0, 1, 2], "b": 1.5, "c": [1, 2]}
    with pytest.raises(ValueError):
        fileio.dumps_json({"x": math.nan})
