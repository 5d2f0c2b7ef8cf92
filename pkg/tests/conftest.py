import numpy as np
import pytest

FD_STEP = 1e-5
FD_RTOL = 1e-4


def numeric_grad(f, arr, coords=None, step=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. entries of ``arr`` (modified in place)."""
    flat = arr.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = []
    for i in coords:
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        out.append((fp - fm) / (2 * step))
    return np.array(out)


def rel_err(a, b):
    a = np.ravel(a)
    b = np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
