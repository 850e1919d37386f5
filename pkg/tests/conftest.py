import numpy as np
import pytest

from wavemap_lab.fields import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_periodic(rng, grid, lead=(), modes=3):
    """Random trigonometric polynomial with a few low modes per component."""
    x = grid.coords()
    out = np.zeros(tuple(lead) + grid.shape)
    for idx in np.ndindex(*lead) if lead else [()]:
        f = np.zeros(grid.shape)
        for _ in range(modes):
            k = rng.integers(-2, 3, size=grid.d)
            phase = rng.uniform(0, 2 * np.pi)
            arg = sum(k[i] * 2 * np.pi / grid.length[i] * x[i] for i in range(grid.d))
            f += rng.normal() * np.cos(arg + phase)
        out[idx] = f
    return out


def random_sphere_map(rng, grid, amp=0.4):
    """Smooth map into S^3 near the north pole."""
    from wavemap_lab.target import project

    v = amp * smooth_periodic(rng, grid, (4,))
    v[0] += 1.0
    return project(v)


@pytest.fixture
def grid3():
    return GridSpec(3, 16)


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    """Record and print one acceptance line."""
    line = f"criterion {number:>4}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
