import numpy as np
import pytest

from aclearn import autodiff


@pytest.fixture(autouse=True)
def debug_checks():
    previous = autodiff.set_debug(True)
    yield
    autodiff.set_debug(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_difference(f, arrays, eps=1e-5):
    """Numerical gradient of scalar f(list_of_arrays) w.r.t. every entry of every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            old = a[idx]
            a[idx] = old + eps
            fp = f(arrays)
            a[idx] = old - eps
            fm = f(arrays)
            a[idx] = old
            g[idx] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        worst = max(worst, float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(n)))))
    return worst


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
