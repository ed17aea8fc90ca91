import numpy as np
import pytest


def central_diff(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + eps
        fp = f(x)
        x[i] = old - eps
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def brute_bilinear(grid, x, y):
    """Literal double sum of the bilinear kernel over every cell."""
    h, w = grid.shape
    total = 0.0
    for qy in range(h):
        for qx in range(w):
            total += grid[qy, qx] * max(0.0, 1 - abs(x - qx)) * max(0.0, 1 - abs(y - qy))
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# PASS/FAIL lines recorded by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
