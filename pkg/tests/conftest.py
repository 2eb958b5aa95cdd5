import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_ball(rng, n=None, radius=1.0):
    """Uniform samples from the Bloch ball."""
    size = 1 if n is None else n
    v = rng.normal(size=(size, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v *= radius * rng.random(size)[:, None] ** (1 / 3)
    return v[0] if n is None else v


def random_unitary(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis, rng.uniform(0, 2 * np.pi)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(results):
        ok, text = results[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {text}")
