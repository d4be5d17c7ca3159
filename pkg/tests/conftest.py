import numpy as np
import pytest

from glossforge import simulator as sim

CRITERIA = 12
_results: dict[int, list[tuple[bool, str]]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    _results.setdefault(n, []).append((bool(ok), detail))


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, CRITERIA + 1):
        checks = _results.get(n)
        if not checks:
            tr.write_line(f"criterion {n:>2}: FAIL  (no result recorded)")
            continue
        ok = all(c[0] for c in checks)
        failed = [d for good, d in checks if not good]
        detail = "; ".join(failed) if failed else "; ".join(d for _, d in checks)
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_scene():
    spec = sim.default_scene_spec(128, 96, seed=3)
    spec["pixel_pitch_um"] = 100.0
    return sim.make_scene(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
