import math

import numpy as np
import pytest


def central_difference(f, x, step=1e-5):
    """Central finite-difference gradient of a scalar function f at x.

    The step for coordinate j is ``step * max(1, |x_j|)``.
    """
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def rel_error(a, b):
    """Norm-wise relative error ||a - b||_inf / ||b||_inf (absolute when b = 0)."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / (scale if scale > 0 else 1.0))


def fd_kernel_oracle(sigma, x, y):
    """All four RBF quantities by finite differences of exp(-|x-y|^2 / 2 sigma^2)."""

    def k(a, b):
        return math.exp(-float(np.sum((a - b) ** 2)) / (2 * sigma**2))

    gx = central_difference(lambda a: k(a, y), x)
    gy = central_difference(lambda b: k(x, b), y)
    # mixed trace: d/dy_i of the finite-difference d/dx_i
    tr = 0.0
    h = 1e-4
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        tr += (k(x + e, y + e) - k(x + e, y - e) - k(x - e, y + e) + k(x - e, y - e)) / (4 * h * h)
    return k(x, y), gx, gy, tr


def grid_inner_product(score, sigma, x, y, half_width=12.0, n_grid=40001):
    """<xi(x, .), xi(y, .)> in the RKHS of a 1-d RBF kernel, by quadrature.

    The RBF kernel factors as k(x, y) = int g(x - t) g(y - t) dt with
    g(u) = (2 / (pi sigma^2))^(1/4) exp(-u^2 / sigma^2), so xi(x, .) maps to
    the L2 function t -> s(x) g(x - t) + g'(x - t).
    """
    c = (2.0 / (np.pi * sigma**2)) ** 0.25
    lo = min(x, y) - half_width * sigma
    hi = max(x, y) + half_width * sigma
    t = np.linspace(lo, hi, n_grid)

    def feature(z):
        u = z - t
        g = c * np.exp(-u * u / sigma**2)
        return score(z) * g - 2.0 * u / sigma**2 * g

    return np.trapezoid(feature(x) * feature(y), t)


@pytest.fixture
def rng():
    return np.random.default_rng(20160211)


_ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
