import numpy as np
import pytest

from glossforge import kernels

BACKENDS = kernels.backends()


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_backends_bit_identical(seed):
    rng = np.random.default_rng(seed)
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    t = rng.random((23, 31))
    thr = 0.5 + 0.25 * (rng.random((23, 31)) - 0.5)
    assert np.array_equal(py.error_diffuse(t, thr), cy.error_diffuse(t, thr))
    s = rng.random((17, 19, 6))
    s /= s.sum(-1, keepdims=True)
    assert np.array_equal(py.vector_error_diffuse(s), cy.vector_error_diffuse(s))
    v = rng.random((40, 37))
    m = rng.random((40, 37)) < 0.4
    for r in (1, 3, 7):
        fp, kp = py.disk_max_fill(v, m, r)
        fc, kc = cy.disk_max_fill(v, m, r)
        assert np.array_equal(fp, fc) and np.array_equal(kp, kc)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_error_diffuse_preserves_mean(name):
    k = BACKENDS[name]
    for level in (0.0, 0.25, 0.6, 1.0):
        out = k.error_diffuse(np.full((64, 64), level), np.full((64, 64), 0.5))
        assert abs(out.mean() - level) < 0.01


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_vector_diffuse_tracks_shares(name):
    k = BACKENDS[name]
    shares = np.broadcast_to([0.2, 0.5, 0.3], (60, 60, 3)).copy()
    out = k.vector_error_diffuse(shares)
    freq = np.bincount(out.ravel(), minlength=3) / out.size
    assert np.allclose(freq, [0.2, 0.5, 0.3], atol=0.01)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_disk_max_fill_matches_brute_force(name):
    k = BACKENDS[name]
    rng = np.random.default_rng(5)
    v = rng.random((15, 18))
    m = rng.random((15, 18)) < 0.5
    r = 3
    filled, found = k.disk_max_fill(v, m, r)
    yy, xx = np.mgrid[0:15, 0:18]
    for y, x in zip(*np.nonzero(m)):
        near = ((yy - y) ** 2 + (xx - x) ** 2 <= r * r) & ~m
        if near.any():
            assert found[y, x] and filled[y, x] == v[near].max()
        else:
            assert not found[y, x]
    assert np.array_equal(filled[~m], v[~m])


def test_env_forces_pure_python():
    import os
    import subprocess
    import sys
    env = dict(os.environ, GLOSSFORGE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from glossforge import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
