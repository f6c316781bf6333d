import numpy as np
import pytest

from cns2d import RandomFieldSpec, make_grid, random_field


def rel(a, b, scale=None):
    """Relative difference of scalars or arrays."""
    a, b = np.asarray(a), np.asarray(b)
    s = scale if scale is not None else max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / s)


@pytest.fixture(scope="session")
def grid8():
    return make_grid(8)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(16)


@pytest.fixture
def field_factory():
    def make(grid, seed=0, stream=0, normalize=1.0, decay=3.0):
        return random_field(RandomFieldSpec(seed, decay, normalize), grid, stream=stream)
    return make


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
