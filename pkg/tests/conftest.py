import numpy as np
import pytest

from quadcurl.mesh import random_voronoi

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(key, passed, detail):
    ACCEPTANCE[key] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("abcdefgh")), s)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


_MESHES = {}


def cached_mesh(domain, n_seeds, seed=0):
    key = (domain, n_seeds, seed)
    if key not in _MESHES:
        _MESHES[key] = random_voronoi(domain, n_seeds, seed=seed)
    return _MESHES[key]


@pytest.fixture
def square50():
    return cached_mesh("square", 50)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def star_polygon(rng, n, center=(0.0, 0.0), scale=1.0):
    """Random CCW polygon, star-shaped with respect to ``center``."""
    while True:
        ang = np.sort(rng.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        if gaps.min() > 0.3 and gaps.max() < np.pi - 0.2:
            break
    r = rng.uniform(0.5, 1.0, n)
    return np.asarray(center) + scale * np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
